//! The central metrics service: ingests pushed METRIC lines, scrapes pull
//! targets, stores tag-keyed series in resolution tiers, downsamples old
//! points, caps tag cardinality, and answers aggregation queries including
//! the RED / Golden-Signal / USE views.
//!
//! Counters are stored as the cumulative values the wire carries; increases
//! are computed at query time, with a value decrease treated as a process
//! restart (the counter restarts from zero, so the decreased value is itself
//! the increase).

use std::collections::{BTreeMap, HashMap, HashSet};

use thiserror::Error;

use crate::wire::{decode_metric, format_value, MetricKind, MetricSample, TagSet};

/// Reserved tag set a series collapses to once its metric name runs out of
/// cardinality budget.
pub fn overflow_tags() -> TagSet {
    TagSet::from_pairs([("__overflow", "true")])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TierAggregate {
    Avg,
    Sum,
    Min,
    Max,
    Last,
}

/// One resolution tier: points step-aligned to `step_ms`, kept for
/// `retention_ms`, folded into the next tier with that tier's aggregate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TierConfig {
    pub step_ms: i64,
    pub retention_ms: i64,
    pub aggregate: TierAggregate,
}

/// Default resolution ladder: 10 s samples for 30 minutes, then hourly
/// averages for 30 days.
pub fn default_tiers() -> Vec<TierConfig> {
    vec![
        TierConfig {
            step_ms: 10_000,
            retention_ms: 30 * 60 * 1000,
            aggregate: TierAggregate::Last,
        },
        TierConfig {
            step_ms: 3_600_000,
            retention_ms: 30 * 24 * 3_600_000,
            aggregate: TierAggregate::Avg,
        },
    ]
}

pub const DEFAULT_CARDINALITY_LIMIT: usize = 1000;
pub const DEFAULT_SCRAPE_INTERVAL_S: u64 = 10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("unknown metric {0:?}")]
    UnknownMetric(String),
    #[error("empty time range")]
    EmptyRange,
    #[error("percentile must be in (0, 100), got {0}")]
    InvalidPercentile(f64),
    #[error("missing instrument {0:?}")]
    MissingInstrument(String),
    #[error("invalid tier configuration: {0}")]
    InvalidTiers(String),
}

/// Identity of one stored series: metric name plus canonical tag set.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SeriesKey {
    pub name: String,
    pub tags: TagSet,
}

/// How stored values combine at query time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum ValueSemantics {
    /// Monotone cumulative counter; queries see per-point increases.
    Cumulative,
    /// Gauge or raw histogram observation; queries see stored values.
    Instant,
}

/// Aggregation state for one bucket. A raw tier-0 point has `count == 1` and
/// all fields equal to the sample value.
#[derive(Debug, Clone, PartialEq)]
struct TierPoint {
    ts_ms: i64,
    sum: f64,
    count: u64,
    min: f64,
    max: f64,
    last: f64,
    last_src_ts: i64,
}

impl TierPoint {
    fn raw(ts_ms: i64, value: f64) -> Self {
        Self {
            ts_ms,
            sum: value,
            count: 1,
            min: value,
            max: value,
            last: value,
            last_src_ts: ts_ms,
        }
    }

    fn merge(&mut self, other: &TierPoint) {
        self.sum += other.sum;
        self.count += other.count;
        self.min = self.min.min(other.min);
        self.max = self.max.max(other.max);
        if other.last_src_ts >= self.last_src_ts {
            self.last = other.last;
            self.last_src_ts = other.last_src_ts;
        }
    }

    fn materialize(&self, aggregate: TierAggregate) -> f64 {
        match aggregate {
            TierAggregate::Avg => self.sum / self.count as f64,
            TierAggregate::Sum => self.sum,
            TierAggregate::Min => self.min,
            TierAggregate::Max => self.max,
            TierAggregate::Last => self.last,
        }
    }
}

#[derive(Debug)]
struct Series {
    semantics: ValueSemantics,
    /// One point vector per tier, timestamps strictly increasing and aligned
    /// to the tier step.
    tiers: Vec<Vec<TierPoint>>,
}

/// Ingestion tallies; overflowed counts samples rerouted to the overflow key.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct PushCounts {
    pub accepted: u64,
    pub malformed: u64,
    pub overflowed: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct DownsampleReport {
    /// Points folded into each tier (index 0 is unused — nothing folds into
    /// the raw tier).
    pub folded: Vec<u64>,
    /// Points evicted past the last tier.
    pub evicted: u64,
}

/// Tag-set-keyed time-series store with resolution tiers and a per-name
/// cardinality cap.
#[derive(Debug)]
pub struct SeriesStore {
    tiers: Vec<TierConfig>,
    cardinality_limit: usize,
    series: BTreeMap<SeriesKey, Series>,
    established: HashMap<String, HashSet<TagSet>>,
    overflow_last: HashMap<(String, TagSet), f64>,
    overflow_cum: HashMap<String, f64>,
}

impl SeriesStore {
    pub fn new(tiers: Vec<TierConfig>, cardinality_limit: usize) -> Result<Self, MetricsError> {
        if tiers.is_empty() {
            return Err(MetricsError::InvalidTiers("need at least one tier".into()));
        }
        for pair in tiers.windows(2) {
            if pair[1].step_ms <= pair[0].step_ms {
                return Err(MetricsError::InvalidTiers(
                    "tier steps must strictly increase".into(),
                ));
            }
            if pair[1].retention_ms < pair[0].retention_ms {
                return Err(MetricsError::InvalidTiers(
                    "tier retentions must not decrease".into(),
                ));
            }
        }
        if tiers.iter().any(|t| t.step_ms <= 0 || t.retention_ms <= 0) {
            return Err(MetricsError::InvalidTiers(
                "steps and retentions must be positive".into(),
            ));
        }
        Ok(Self {
            tiers,
            cardinality_limit,
            series: BTreeMap::new(),
            established: HashMap::new(),
            overflow_last: HashMap::new(),
            overflow_cum: HashMap::new(),
        })
    }

    pub fn with_defaults() -> Self {
        Self::new(default_tiers(), DEFAULT_CARDINALITY_LIMIT).expect("default tiers are valid")
    }

    pub fn series_count(&self) -> usize {
        self.series.len()
    }

    pub fn series_count_for(&self, name: &str) -> usize {
        self.series.keys().filter(|k| k.name == name).count()
    }

    pub fn series_keys(&self) -> impl Iterator<Item = &SeriesKey> {
        self.series.keys()
    }

    /// Applies the cardinality cap: an established tag set or one under the
    /// limit maps to itself, anything else collapses to the reserved
    /// `__overflow` key for that name. Established keys stay established.
    pub fn limit_cardinality(&mut self, name: &str, tags: &TagSet) -> (TagSet, bool) {
        let entry = self.established.entry(name.to_string()).or_default();
        if entry.contains(tags) {
            return (tags.clone(), false);
        }
        if entry.len() < self.cardinality_limit {
            entry.insert(tags.clone());
            return (tags.clone(), false);
        }
        (overflow_tags(), true)
    }

    /// Writes one sample into the raw tier; returns true when the sample was
    /// rerouted to the overflow series.
    pub fn write(&mut self, sample: &MetricSample) -> bool {
        let (key_tags, overflowed) = self.limit_cardinality(&sample.name, &sample.tags);
        let semantics = match sample.kind {
            MetricKind::Counter => ValueSemantics::Cumulative,
            MetricKind::Gauge | MetricKind::HistogramObservation => ValueSemantics::Instant,
        };
        let value = if overflowed && semantics == ValueSemantics::Cumulative {
            // Fold the per-tag-set increase into one synthetic cumulative
            // counter so totals stay conserved across the collapse.
            let last = self
                .overflow_last
                .entry((sample.name.clone(), sample.tags.clone()))
                .or_insert(0.0);
            let delta = if sample.value >= *last {
                sample.value - *last
            } else {
                sample.value
            };
            *last = sample.value;
            let cum = self.overflow_cum.entry(sample.name.clone()).or_insert(0.0);
            *cum += delta;
            *cum
        } else {
            sample.value
        };
        let key = SeriesKey {
            name: sample.name.clone(),
            tags: key_tags,
        };
        let n_tiers = self.tiers.len();
        let step = self.tiers[0].step_ms;
        let aligned = sample.timestamp_ms.div_euclid(step) * step;
        let series = self.series.entry(key).or_insert_with(|| Series {
            semantics,
            tiers: vec![Vec::new(); n_tiers],
        });
        let point = TierPoint::raw(aligned, value);
        if sample.kind == MetricKind::HistogramObservation {
            // Observations are events, not samples: two in one step bucket
            // accumulate instead of replacing each other.
            upsert_fold(&mut series.tiers[0], point);
        } else {
            upsert_raw(&mut series.tiers[0], point);
        }
        overflowed
    }

    /// Folds points older than each tier's retention into the next tier
    /// (using the destination tier's aggregate) and evicts them; points
    /// falling off the last tier disappear. Buckets align to wall-clock
    /// multiples of the destination step.
    pub fn downsample(&mut self, now_ms: i64) -> DownsampleReport {
        let mut report = DownsampleReport {
            folded: vec![0; self.tiers.len()],
            evicted: 0,
        };
        for series in self.series.values_mut() {
            for i in 0..self.tiers.len() {
                let cutoff = now_ms - self.tiers[i].retention_ms;
                let split = series.tiers[i].partition_point(|p| p.ts_ms < cutoff);
                if split == 0 {
                    continue;
                }
                let old: Vec<TierPoint> = series.tiers[i].drain(..split).collect();
                if i + 1 < self.tiers.len() {
                    let dest_step = self.tiers[i + 1].step_ms;
                    for mut point in old {
                        point.ts_ms = point.ts_ms.div_euclid(dest_step) * dest_step;
                        report.folded[i + 1] += 1;
                        upsert_fold(&mut series.tiers[i + 1], point);
                    }
                } else {
                    report.evicted += old.len() as u64;
                }
            }
        }
        report
    }

    /// Materialized `(timestamp, value)` points of one tier of one series;
    /// inspection hook for tests and the demo.
    pub fn tier_points(&self, key: &SeriesKey, tier: usize) -> Vec<(i64, f64)> {
        let aggregate = self.tiers[tier].aggregate;
        self.series
            .get(key)
            .map(|s| {
                s.tiers[tier]
                    .iter()
                    .map(|p| (p.ts_ms, p.materialize(aggregate)))
                    .collect()
            })
            .unwrap_or_default()
    }

    /// All materialized points of a series across tiers, sorted by timestamp.
    pub fn all_points(&self, key: &SeriesKey) -> Vec<(i64, f64)> {
        let Some(series) = self.series.get(key) else {
            return Vec::new();
        };
        let mut out: Vec<(i64, f64)> = Vec::new();
        for (tier_idx, points) in series.tiers.iter().enumerate().rev() {
            let aggregate = self.tiers[tier_idx].aggregate;
            out.extend(points.iter().map(|p| (p.ts_ms, p.materialize(aggregate))));
        }
        out.sort_by_key(|(ts, _)| *ts);
        out
    }

    /// Values a query pools for one series over `[start, end)`: per-point
    /// increases for counters (a decrease is a restart and counts from
    /// zero), stored values otherwise. A bucket holding several accumulated
    /// source values contributes its mean once per source value, which keeps
    /// AVG, SUM and COUNT exact over merged observation buckets.
    fn query_values(&self, key: &SeriesKey, start_ms: i64, end_ms: i64) -> Vec<f64> {
        let Some(series) = self.series.get(key) else {
            return Vec::new();
        };
        match series.semantics {
            ValueSemantics::Instant => {
                let mut out = Vec::new();
                for tier_points in series.tiers.iter().rev() {
                    for p in tier_points {
                        if p.ts_ms < start_ms || p.ts_ms >= end_ms {
                            continue;
                        }
                        if p.count <= 1 {
                            out.push(p.last);
                        } else {
                            let mean = p.sum / p.count as f64;
                            out.extend(std::iter::repeat_n(mean, p.count as usize));
                        }
                    }
                }
                out
            }
            ValueSemantics::Cumulative => {
                let mut prev: Option<f64> = None;
                let mut out = Vec::new();
                for (ts, v) in self.all_points(key) {
                    let increase = match prev {
                        Some(p) if v >= p => v - p,
                        // First point ever, or a restart: the cumulative
                        // value itself is the increase since zero.
                        _ => v,
                    };
                    prev = Some(v);
                    if ts >= start_ms && ts < end_ms {
                        out.push(increase);
                    }
                }
                out
            }
        }
    }

    fn keys_matching(&self, name: &str, tag_filter: &[(String, String)]) -> Vec<SeriesKey> {
        self.series
            .keys()
            .filter(|k| k.name == name)
            .filter(|k| {
                tag_filter
                    .iter()
                    .all(|(fk, fv)| k.tags.get(fk) == Some(fv.as_str()))
            })
            .cloned()
            .collect()
    }

    fn name_exists(&self, name: &str) -> bool {
        self.series.keys().any(|k| k.name == name)
    }
}

/// Raw-tier write: a second sample in the same step bucket replaces the
/// earlier one (last write wins).
fn upsert_raw(points: &mut Vec<TierPoint>, point: TierPoint) {
    match points.binary_search_by_key(&point.ts_ms, |p| p.ts_ms) {
        Ok(i) => points[i] = point,
        Err(i) => points.insert(i, point),
    }
}

/// Fold write: merging accumulates into the destination bucket.
fn upsert_fold(points: &mut Vec<TierPoint>, point: TierPoint) {
    match points.binary_search_by_key(&point.ts_ms, |p| p.ts_ms) {
        Ok(i) => points[i].merge(&point),
        Err(i) => points.insert(i, point),
    }
}

// ---------------------------------------------------------------------------
// Range queries
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Aggregate {
    Avg,
    Sum,
    Min,
    Max,
    Count,
    /// Nearest-rank percentile over the exact pooled values: the
    /// `ceil(p/100 * n)`-th smallest.
    Pct(f64),
}

#[derive(Debug, Clone)]
pub struct RangeQuery {
    pub name: String,
    pub tag_filter: Vec<(String, String)>,
    pub start_ms: i64,
    pub end_ms: i64,
    pub aggregate: Aggregate,
    pub group_by: Vec<String>,
}

/// One result row: the group's tag values, the range end, the aggregate.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryRow {
    pub group: Vec<(String, String)>,
    pub ts_ms: i64,
    pub value: f64,
}

/// Nearest-rank percentile of a sorted slice.
pub fn nearest_rank(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let n = sorted.len();
    let rank = ((p / 100.0) * n as f64).ceil() as usize;
    sorted[rank.clamp(1, n) - 1]
}

impl SeriesStore {
    /// Runs a range query: matching series are grouped by the `group_by` tag
    /// keys, the values of each group are pooled over the range, and the
    /// aggregate collapses each pool to one row. Rows are ordered by group.
    pub fn query_range(&self, query: &RangeQuery) -> Result<Vec<QueryRow>, MetricsError> {
        if query.end_ms <= query.start_ms {
            return Err(MetricsError::EmptyRange);
        }
        if let Aggregate::Pct(p) = query.aggregate {
            if !(0.0 < p && p < 100.0) {
                return Err(MetricsError::InvalidPercentile(p));
            }
        }
        if !self.name_exists(&query.name) {
            return Err(MetricsError::UnknownMetric(query.name.clone()));
        }
        let mut groups: BTreeMap<Vec<(String, String)>, Vec<f64>> = BTreeMap::new();
        for key in self.keys_matching(&query.name, &query.tag_filter) {
            let group: Vec<(String, String)> = query
                .group_by
                .iter()
                .map(|g| (g.clone(), key.tags.get(g).unwrap_or("").to_string()))
                .collect();
            let values = self.query_values(&key, query.start_ms, query.end_ms);
            groups.entry(group).or_default().extend(values);
        }
        let mut rows = Vec::new();
        for (group, mut values) in groups {
            if values.is_empty() {
                continue;
            }
            let value = match query.aggregate {
                Aggregate::Avg => values.iter().sum::<f64>() / values.len() as f64,
                Aggregate::Sum => values.iter().sum(),
                Aggregate::Min => values.iter().copied().fold(f64::INFINITY, f64::min),
                Aggregate::Max => values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                Aggregate::Count => values.len() as f64,
                Aggregate::Pct(p) => {
                    values.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
                    nearest_rank(&values, p)
                }
            };
            rows.push(QueryRow {
                group,
                ts_ms: query.end_ms,
                value,
            });
        }
        Ok(rows)
    }

    fn sum_increases(
        &self,
        name: &str,
        tag_filter: &[(String, String)],
        start_ms: i64,
        end_ms: i64,
    ) -> Option<f64> {
        if !self.name_exists(name) {
            return None;
        }
        Some(
            self.keys_matching(name, tag_filter)
                .iter()
                .flat_map(|k| self.query_values(k, start_ms, end_ms))
                .sum(),
        )
    }

    fn pooled_values(
        &self,
        name: &str,
        tag_filter: &[(String, String)],
        start_ms: i64,
        end_ms: i64,
    ) -> Option<Vec<f64>> {
        if !self.name_exists(name) {
            return None;
        }
        let mut values: Vec<f64> = self
            .keys_matching(name, tag_filter)
            .iter()
            .flat_map(|k| self.query_values(k, start_ms, end_ms))
            .collect();
        values.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
        Some(values)
    }

    /// Latest `(ts, value)` strictly before `end_ms` among matching series.
    fn latest_value(
        &self,
        name: &str,
        tag_filter: &[(String, String)],
        end_ms: i64,
    ) -> Option<(i64, f64)> {
        let mut best: Option<(i64, f64)> = None;
        for key in self.keys_matching(name, tag_filter) {
            for (ts, v) in self.all_points(&key) {
                if ts < end_ms && best.is_none_or(|(bts, _)| ts >= bts) {
                    best = Some((ts, v));
                }
            }
        }
        best
    }
}

// ---------------------------------------------------------------------------
// Derived views
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum View {
    Red { service: String },
    Golden { service: String },
    Use { resource: Option<String> },
}

/// Render-ready table: column names plus stringified rows (values printed
/// with the shortest round-trippable decimal, so output is byte-stable).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ViewTable {
    pub title: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

pub const USE_RESOURCES: [&str; 4] = ["cpu", "memory", "disk", "network"];

impl SeriesStore {
    /// RED / Golden-Signal / USE tables over `[start, end)`.
    ///
    /// RED reports per-service request rate, error rate, availability
    /// (`1 - error_rate/rate`, this project's convention) and duration
    /// percentiles from raw observations. GOLDEN adds the node's CPU
    /// utilization as the saturation signal, joined on `node.label`. USE
    /// reports utilization / saturation / errors per resource and node.
    pub fn derived_view(
        &self,
        view: &View,
        start_ms: i64,
        end_ms: i64,
    ) -> Result<ViewTable, MetricsError> {
        if end_ms <= start_ms {
            return Err(MetricsError::EmptyRange);
        }
        match view {
            View::Red { service } => self.red_table("red", service, start_ms, end_ms, false),
            View::Golden { service } => self.red_table("golden", service, start_ms, end_ms, true),
            View::Use { resource } => self.use_table(resource.as_deref(), start_ms, end_ms),
        }
    }

    fn red_table(
        &self,
        title: &str,
        service: &str,
        start_ms: i64,
        end_ms: i64,
        with_saturation: bool,
    ) -> Result<ViewTable, MetricsError> {
        let filter = vec![("service".to_string(), service.to_string())];
        let window_s = (end_ms - start_ms) as f64 / 1000.0;
        let requests = self
            .sum_increases("requests_total", &filter, start_ms, end_ms)
            .ok_or_else(|| MetricsError::MissingInstrument("requests_total".into()))?;
        let errors = self
            .sum_increases("errors_total", &filter, start_ms, end_ms)
            .unwrap_or(0.0);
        let durations = self
            .pooled_values("request_duration_ms", &filter, start_ms, end_ms)
            .ok_or_else(|| MetricsError::MissingInstrument("request_duration_ms".into()))?;
        let rate = requests / window_s;
        let error_rate = errors / window_s;
        let availability = if requests > 0.0 {
            1.0 - errors / requests
        } else {
            1.0
        };
        let mut rows = vec![
            vec!["rate_per_s".to_string(), format_value(rate)],
            vec!["error_rate_per_s".to_string(), format_value(error_rate)],
            vec!["availability".to_string(), format_value(availability)],
        ];
        for (label, p) in [("p50_ms", 50.0), ("p95_ms", 95.0), ("p99_ms", 99.0)] {
            let value = if durations.is_empty() {
                f64::NAN
            } else {
                nearest_rank(&durations, p)
            };
            rows.push(vec![label.to_string(), format_value(value)]);
        }
        if with_saturation {
            let node = self
                .keys_matching("requests_total", &filter)
                .iter()
                .find_map(|k| k.tags.get("node.label").map(str::to_string))
                .ok_or_else(|| MetricsError::MissingInstrument("requests_total".into()))?;
            let node_filter = vec![("node.label".to_string(), node.clone())];
            let (_, saturation) = self
                .latest_value("cpu_utilization_percent", &node_filter, end_ms)
                .ok_or_else(|| MetricsError::MissingInstrument("cpu_utilization_percent".into()))?;
            rows.push(vec![
                "saturation_percent".to_string(),
                format_value(saturation),
            ]);
            rows.push(vec!["node".to_string(), node]);
        }
        Ok(ViewTable {
            title: format!("{title} {service}"),
            columns: vec!["metric".to_string(), "value".to_string()],
            rows,
        })
    }

    fn use_table(
        &self,
        resource: Option<&str>,
        start_ms: i64,
        end_ms: i64,
    ) -> Result<ViewTable, MetricsError> {
        let resources: Vec<&str> = match resource {
            Some(r) => vec![r],
            None => USE_RESOURCES.to_vec(),
        };
        let mut rows = Vec::new();
        for res in resources {
            let util_name = format!("{res}_utilization_percent");
            let sat_name = format!("{res}_saturation");
            let err_name = format!("{res}_errors_total");
            let mut nodes: Vec<String> = self
                .keys_matching(&util_name, &[])
                .iter()
                .filter_map(|k| k.tags.get("node.label").map(str::to_string))
                .collect();
            nodes.sort();
            nodes.dedup();
            for node in nodes {
                let node_filter = vec![("node.label".to_string(), node.clone())];
                let util = self
                    .latest_value(&util_name, &node_filter, end_ms)
                    .map(|(_, v)| v);
                let sat = self
                    .latest_value(&sat_name, &node_filter, end_ms)
                    .map(|(_, v)| v);
                let errors = self
                    .sum_increases(&err_name, &node_filter, start_ms, end_ms)
                    .unwrap_or(0.0);
                rows.push(vec![
                    res.to_string(),
                    node,
                    util.map(format_value).unwrap_or_else(|| "-".to_string()),
                    sat.map(format_value).unwrap_or_else(|| "-".to_string()),
                    format_value(errors),
                ]);
            }
        }
        if rows.is_empty() {
            return Err(MetricsError::MissingInstrument(
                "<resource>_utilization_percent".into(),
            ));
        }
        Ok(ViewTable {
            title: "use".to_string(),
            columns: vec![
                "resource".to_string(),
                "node".to_string(),
                "utilization_percent".to_string(),
                "saturation".to_string(),
                "errors".to_string(),
            ],
            rows,
        })
    }
}

// ---------------------------------------------------------------------------
// Exposition parsing (scrape client side)
// ---------------------------------------------------------------------------

/// One parsed exposition line: `name{k="v",...} value [timestamp]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpositionSample {
    pub name: String,
    pub tags: TagSet,
    pub value: f64,
    pub timestamp_ms: Option<i64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("bad exposition line: {0}")]
pub struct ExpositionError(String);

pub fn parse_exposition(body: &str) -> Result<Vec<ExpositionSample>, ExpositionError> {
    let mut out = Vec::new();
    for raw in body.lines() {
        let line = raw.trim_end();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        out.push(parse_exposition_line(line)?);
    }
    Ok(out)
}

fn parse_exposition_line(line: &str) -> Result<ExpositionSample, ExpositionError> {
    let err = |m: &str| ExpositionError(format!("{m} in {line:?}"));
    let (name_part, rest) = match line.find('{') {
        Some(brace) => {
            let close = line[brace..]
                .find('}')
                .map(|i| brace + i)
                .ok_or_else(|| err("unclosed tag brace"))?;
            (&line[..close + 1], line[close + 1..].trim_start())
        }
        None => {
            let space = line.find(' ').ok_or_else(|| err("missing value"))?;
            (&line[..space], line[space + 1..].trim_start())
        }
    };
    let (name, tags) = match name_part.find('{') {
        Some(brace) => {
            let inner = &name_part[brace + 1..name_part.len() - 1];
            (
                name_part[..brace].to_string(),
                parse_exposition_tags(inner).map_err(|m| err(&m))?,
            )
        }
        None => (name_part.to_string(), TagSet::empty()),
    };
    if !crate::wire::valid_metric_name(&name) {
        return Err(err("bad metric name"));
    }
    let mut pieces = rest.split_whitespace();
    let value: f64 = pieces
        .next()
        .ok_or_else(|| err("missing value"))?
        .parse()
        .map_err(|_| err("bad value"))?;
    let timestamp_ms = match pieces.next() {
        Some(ts) => Some(ts.parse::<i64>().map_err(|_| err("bad timestamp"))?),
        None => None,
    };
    if pieces.next().is_some() {
        return Err(err("trailing tokens"));
    }
    Ok(ExpositionSample {
        name,
        tags,
        value,
        timestamp_ms,
    })
}

fn parse_exposition_tags(inner: &str) -> Result<TagSet, String> {
    let mut pairs: Vec<(String, String)> = Vec::new();
    let mut chars = inner.chars().peekable();
    while chars.peek().is_some() {
        let mut key = String::new();
        for c in chars.by_ref() {
            if c == '=' {
                break;
            }
            key.push(c);
        }
        if key.is_empty() {
            return Err("empty tag key".to_string());
        }
        if chars.next() != Some('"') {
            return Err("tag value must be quoted".to_string());
        }
        let mut value = String::new();
        let mut closed = false;
        while let Some(c) = chars.next() {
            match c {
                '\\' => match chars.next() {
                    Some('\\') => value.push('\\'),
                    Some('"') => value.push('"'),
                    Some('n') => value.push('\n'),
                    _ => return Err("bad escape in tag value".to_string()),
                },
                '"' => {
                    closed = true;
                    break;
                }
                other => value.push(other),
            }
        }
        if !closed {
            return Err("unterminated tag value".to_string());
        }
        pairs.push((key, value));
        match chars.next() {
            Some(',') => {}
            None => break,
            Some(_) => return Err("expected comma between tags".to_string()),
        }
    }
    Ok(TagSet::from_pairs(pairs))
}

/// Cumulative-vs-instant inference for scraped series, where the exposition
/// format carries no kind marker: conventional suffixes mark counters.
pub fn scraped_kind(name: &str) -> MetricKind {
    if name.ends_with("_total")
        || name.ends_with("_bucket")
        || name.ends_with("_count")
        || name.ends_with("_sum")
    {
        MetricKind::Counter
    } else {
        MetricKind::Gauge
    }
}

// ---------------------------------------------------------------------------
// Service wrapper
// ---------------------------------------------------------------------------

/// Something the scrape client can fetch an exposition body from.
pub trait ScrapeTransport {
    fn fetch(&mut self) -> Result<String, String>;
}

/// Outcome of one scrape pass.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ScrapeOutcome {
    Ingested(u64),
    TargetUnreachable(String),
}

/// Ingestion front of the metrics service: push listener counts plus the
/// scrape client, both writing into one [`SeriesStore`].
#[derive(Debug)]
pub struct MetricsService {
    pub store: SeriesStore,
    pub counts: PushCounts,
    scrape_failures: HashMap<String, u64>,
}

impl MetricsService {
    pub fn new(store: SeriesStore) -> Self {
        Self {
            store,
            counts: PushCounts::default(),
            scrape_failures: HashMap::new(),
        }
    }

    pub fn with_defaults() -> Self {
        Self::new(SeriesStore::with_defaults())
    }

    /// Ingests one pushed METRIC line. Nothing is reported to the sender;
    /// the counts are observable here.
    pub fn ingest_line(&mut self, line: &str) {
        match decode_metric(line) {
            Ok(sample) => {
                let overflowed = self.store.write(&sample);
                self.counts.accepted += 1;
                if overflowed {
                    self.counts.overflowed += 1;
                }
            }
            Err(_) => self.counts.malformed += 1,
        }
    }

    pub fn ingest_push<'a>(&mut self, lines: impl IntoIterator<Item = &'a str>) -> PushCounts {
        let before = self.counts;
        for line in lines {
            self.ingest_line(line);
        }
        PushCounts {
            accepted: self.counts.accepted - before.accepted,
            malformed: self.counts.malformed - before.malformed,
            overflowed: self.counts.overflowed - before.overflowed,
        }
    }

    /// Scrapes one pull target: parses the exposition body and writes every
    /// series, stamping lines that omit a timestamp with the scrape time.
    /// Reachability is tracked in `up{target=...}` and
    /// `scrape_failures_total{target=...}`.
    pub fn scrape_target(
        &mut self,
        target: &str,
        transport: &mut dyn ScrapeTransport,
        scrape_ts_ms: i64,
    ) -> ScrapeOutcome {
        let tags = TagSet::from_pairs([("target", target)]);
        match transport.fetch() {
            Ok(body) => match parse_exposition(&body) {
                Ok(samples) => {
                    let n = samples.len() as u64;
                    for s in samples {
                        self.store.write(&MetricSample {
                            name: s.name.clone(),
                            kind: scraped_kind(&s.name),
                            value: s.value,
                            timestamp_ms: s.timestamp_ms.unwrap_or(scrape_ts_ms),
                            tags: s.tags,
                        });
                    }
                    self.write_up(&tags, 1.0, scrape_ts_ms);
                    ScrapeOutcome::Ingested(n)
                }
                Err(e) => {
                    self.record_scrape_failure(target, &tags, scrape_ts_ms);
                    ScrapeOutcome::TargetUnreachable(e.to_string())
                }
            },
            Err(e) => {
                self.record_scrape_failure(target, &tags, scrape_ts_ms);
                ScrapeOutcome::TargetUnreachable(e)
            }
        }
    }

    fn write_up(&mut self, tags: &TagSet, value: f64, ts_ms: i64) {
        self.store.write(&MetricSample {
            name: "up".to_string(),
            kind: MetricKind::Gauge,
            value,
            timestamp_ms: ts_ms,
            tags: tags.clone(),
        });
    }

    fn record_scrape_failure(&mut self, target: &str, tags: &TagSet, ts_ms: i64) {
        let failures = self.scrape_failures.entry(target.to_string()).or_insert(0);
        *failures += 1;
        let cumulative = *failures as f64;
        self.store.write(&MetricSample {
            name: "scrape_failures_total".to_string(),
            kind: MetricKind::Counter,
            value: cumulative,
            timestamp_ms: ts_ms,
            tags: tags.clone(),
        });
        self.write_up(tags, 0.0, ts_ms);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wire::MetricKind;

    fn gauge(name: &str, value: f64, ts_ms: i64, tags: TagSet) -> MetricSample {
        MetricSample {
            name: name.into(),
            kind: MetricKind::Gauge,
            value,
            timestamp_ms: ts_ms,
            tags,
        }
    }

    fn counter(name: &str, value: f64, ts_ms: i64, tags: TagSet) -> MetricSample {
        MetricSample {
            name: name.into(),
            kind: MetricKind::Counter,
            value,
            timestamp_ms: ts_ms,
            tags,
        }
    }

    #[test]
    fn push_accepts_valid_and_counts_malformed() {
        let mut svc = MetricsService::with_defaults();
        let counts = svc.ingest_push([
            "METRIC temp G 21.5 10000 room=lab",
            "definitely not a metric",
        ]);
        assert_eq!(counts.accepted, 1);
        assert_eq!(counts.malformed, 1);
        assert_eq!(svc.store.series_count_for("temp"), 1);
    }

    #[test]
    fn cardinality_limit_three_sets_limit_two() {
        let mut store = SeriesStore::new(default_tiers(), 2).unwrap();
        for (i, name) in ["a", "b", "c"].iter().enumerate() {
            let tags = TagSet::from_pairs([("id", *name)]);
            store.write(&gauge("m", i as f64, 10_000, tags));
        }
        assert_eq!(store.series_count_for("m"), 3, "two real + overflow");
        let keys: Vec<_> = store.series_keys().cloned().collect();
        assert!(keys.iter().any(|k| k.tags == overflow_tags()));
        // Established key keeps routing to itself after overflow began.
        let (routed, overflowed) = store.limit_cardinality("m", &TagSet::from_pairs([("id", "a")]));
        assert_eq!(routed, TagSet::from_pairs([("id", "a")]));
        assert!(!overflowed);
    }

    #[test]
    fn counter_overflow_conserves_totals() {
        let mut store = SeriesStore::new(default_tiers(), 2).unwrap();
        // Four tag sets, two samples each, cumulative 1 then 3 (total 3 per set).
        for id in ["a", "b", "c", "d"] {
            let tags = TagSet::from_pairs([("id", id)]);
            store.write(&counter("hits_total", 1.0, 10_000, tags.clone()));
            store.write(&counter("hits_total", 3.0, 20_000, tags));
        }
        let total: f64 = store
            .keys_matching("hits_total", &[])
            .iter()
            .flat_map(|k| store.query_values(k, 0, i64::MAX))
            .sum();
        assert_eq!(total, 12.0, "4 tag sets x cumulative 3");
    }

    #[test]
    fn downsample_six_samples_to_minute_average() {
        let tiers = vec![
            TierConfig {
                step_ms: 10_000,
                retention_ms: 60_000,
                aggregate: TierAggregate::Last,
            },
            TierConfig {
                step_ms: 60_000,
                retention_ms: 3_600_000,
                aggregate: TierAggregate::Avg,
            },
        ];
        let mut store = SeriesStore::new(tiers, 10).unwrap();
        let tags = TagSet::empty();
        for (i, v) in [1.0, 2.0, 3.0, 4.0, 5.0, 6.0].iter().enumerate() {
            store.write(&gauge("m", *v, i as i64 * 10_000, tags.clone()));
        }
        // All six are older than 60s at t=120s.
        store.downsample(120_000);
        let key = SeriesKey {
            name: "m".into(),
            tags,
        };
        assert!(store.tier_points(&key, 0).is_empty());
        assert_eq!(store.tier_points(&key, 1), vec![(0, 3.5)]);
    }

    #[test]
    fn downsample_no_old_points_is_noop() {
        let mut store = SeriesStore::with_defaults();
        store.write(&gauge("m", 1.0, 1_000_000, TagSet::empty()));
        let report = store.downsample(1_010_000);
        assert_eq!(report.folded[1], 0);
        assert_eq!(report.evicted, 0);
    }

    #[test]
    fn downsample_two_hour_backfill_default_tiers() {
        let mut store = SeriesStore::with_defaults();
        let tags = TagSet::empty();
        let t0 = 0i64;
        let n = 2 * 360; // 2h of 10s samples
        for i in 0..n {
            store.write(&gauge(
                "cpu",
                i as f64,
                t0 + i as i64 * 10_000,
                tags.clone(),
            ));
        }
        let now = t0 + 2 * 3_600_000;
        store.downsample(now);
        let key = SeriesKey {
            name: "cpu".into(),
            tags,
        };
        let raw = store.tier_points(&key, 0);
        // Raw holds exactly the last 30 minutes: 180 points.
        assert_eq!(raw.len(), 180);
        assert_eq!(raw[0].0, now - 1_800_000);
        let hourly = store.tier_points(&key, 1);
        assert_eq!(hourly.len(), 2, "two hourly buckets");
        // First hour: values 0..359, mean 179.5.
        assert!((hourly[0].1 - 179.5).abs() < 1e-9);
        // Second hour: only its first 30 min aged out (values 360..539).
        assert!((hourly[1].1 - 449.5).abs() < 1e-9);
    }

    #[test]
    fn downsample_sum_tier_conserves_integer_totals() {
        let tiers = vec![
            TierConfig {
                step_ms: 10_000,
                retention_ms: 60_000,
                aggregate: TierAggregate::Last,
            },
            TierConfig {
                step_ms: 60_000,
                retention_ms: 3_600_000,
                aggregate: TierAggregate::Sum,
            },
        ];
        let mut store = SeriesStore::new(tiers, 10).unwrap();
        let tags = TagSet::empty();
        let mut expected = 0.0;
        for i in 0..360 {
            let v = (i % 17) as f64;
            expected += v;
            store.write(&gauge("m", v, i as i64 * 10_000, tags.clone()));
        }
        // Old enough to fold most raw points, within tier-1 retention.
        store.downsample(360 * 10_000);
        let key = SeriesKey {
            name: "m".into(),
            tags,
        };
        let raw_left = store.tier_points(&key, 0);
        assert!(!raw_left.is_empty() && raw_left.len() < 360, "partial fold");
        let total: f64 = raw_left
            .iter()
            .chain(store.tier_points(&key, 1).iter())
            .map(|(_, v)| v)
            .sum();
        assert_eq!(total, expected);
    }

    #[test]
    fn query_avg_single_series() {
        let mut store = SeriesStore::with_defaults();
        for (i, v) in [10.0, 20.0, 30.0].iter().enumerate() {
            store.write(&gauge("m", *v, i as i64 * 10_000, TagSet::empty()));
        }
        let rows = store
            .query_range(&RangeQuery {
                name: "m".into(),
                tag_filter: vec![],
                start_ms: 0,
                end_ms: 100_000,
                aggregate: Aggregate::Avg,
                group_by: vec![],
            })
            .unwrap();
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].value, 20.0);
        assert_eq!(rows[0].ts_ms, 100_000);
    }

    #[test]
    fn query_pct_nearest_rank() {
        let mut store = SeriesStore::with_defaults();
        for i in 1..=100 {
            store.write(&gauge("lat", i as f64, i as i64 * 10_000, TagSet::empty()));
        }
        let q = |p: f64| {
            store
                .query_range(&RangeQuery {
                    name: "lat".into(),
                    tag_filter: vec![],
                    start_ms: 0,
                    end_ms: 2_000_000,
                    aggregate: Aggregate::Pct(p),
                    group_by: vec![],
                })
                .unwrap()[0]
                .value
        };
        assert_eq!(q(99.0), 99.0);
        assert_eq!(q(50.0), 50.0);
        assert_eq!(q(1.0), 1.0);
    }

    #[test]
    fn query_pct_matches_sort_oracle_on_seeded_multisets() {
        use crate::rng::SplitMix64;
        let mut rng = SplitMix64::new(404);
        for round in 0..20 {
            let n = 1 + (rng.next_u64() % 300) as usize;
            let mut store = SeriesStore::with_defaults();
            let mut values = Vec::with_capacity(n);
            for i in 0..n {
                let v = (rng.next_u64() % 1000) as f64 / 4.0;
                values.push(v);
                store.write(&gauge("m", v, i as i64 * 10_000, TagSet::empty()));
            }
            let p = 1.0 + (rng.next_u64() % 99) as f64 * 0.98;
            let got = store
                .query_range(&RangeQuery {
                    name: "m".into(),
                    tag_filter: vec![],
                    start_ms: 0,
                    end_ms: i64::MAX,
                    aggregate: Aggregate::Pct(p),
                    group_by: vec![],
                })
                .unwrap()[0]
                .value;
            // Independent oracle: sort and index by ceil(p/100*n).
            values.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let rank = ((p / 100.0) * n as f64).ceil() as usize;
            let expected = values[rank.clamp(1, n) - 1];
            assert_eq!(got, expected, "round {round}, n {n}, p {p}");
        }
    }

    #[test]
    fn query_sum_grouped_by_service_counters() {
        let mut store = SeriesStore::with_defaults();
        // Cumulative counters: a ends at 30, b at 7.
        for (svc, values) in [("a", vec![10.0, 30.0]), ("b", vec![7.0])] {
            let tags = TagSet::from_pairs([("service", svc)]);
            for (i, v) in values.iter().enumerate() {
                store.write(&counter(
                    "requests_total",
                    *v,
                    i as i64 * 10_000,
                    tags.clone(),
                ));
            }
        }
        let rows = store
            .query_range(&RangeQuery {
                name: "requests_total".into(),
                tag_filter: vec![],
                start_ms: 0,
                end_ms: 1_000_000,
                aggregate: Aggregate::Sum,
                group_by: vec!["service".into()],
            })
            .unwrap();
        assert_eq!(rows.len(), 2);
        assert_eq!(
            rows[0].group,
            vec![("service".to_string(), "a".to_string())]
        );
        assert_eq!(rows[0].value, 30.0);
        assert_eq!(rows[1].value, 7.0);
    }

    #[test]
    fn counter_reset_starts_new_segment() {
        let mut store = SeriesStore::with_defaults();
        let tags = TagSet::empty();
        for (i, v) in [5.0, 8.0, 2.0, 4.0].iter().enumerate() {
            store.write(&counter("c_total", *v, i as i64 * 10_000, tags.clone()));
        }
        // Increases: 5, 3, 2 (reset), 2 => 12.
        let key = SeriesKey {
            name: "c_total".into(),
            tags,
        };
        let total: f64 = store.query_values(&key, 0, i64::MAX).iter().sum();
        assert_eq!(total, 12.0);
    }

    #[test]
    fn unknown_metric_and_empty_range_errors() {
        let store = SeriesStore::with_defaults();
        let q = RangeQuery {
            name: "nope".into(),
            tag_filter: vec![],
            start_ms: 0,
            end_ms: 10,
            aggregate: Aggregate::Avg,
            group_by: vec![],
        };
        assert_eq!(
            store.query_range(&q),
            Err(MetricsError::UnknownMetric("nope".into()))
        );
        let mut q2 = q.clone();
        q2.end_ms = 0;
        assert_eq!(store.query_range(&q2), Err(MetricsError::EmptyRange));
        let mut q3 = q.clone();
        q3.aggregate = Aggregate::Pct(100.0);
        assert_eq!(
            store.query_range(&q3),
            Err(MetricsError::InvalidPercentile(100.0))
        );
    }

    #[test]
    fn query_is_deterministic() {
        let build = || {
            let mut store = SeriesStore::with_defaults();
            for svc in ["b", "a", "c"] {
                let tags = TagSet::from_pairs([("service", svc)]);
                for i in 0..5 {
                    store.write(&gauge("m", i as f64, i * 10_000, tags.clone()));
                }
            }
            store
                .query_range(&RangeQuery {
                    name: "m".into(),
                    tag_filter: vec![],
                    start_ms: 0,
                    end_ms: 100_000,
                    aggregate: Aggregate::Avg,
                    group_by: vec!["service".into()],
                })
                .unwrap()
        };
        assert_eq!(build(), build());
    }

    #[test]
    fn red_view_rate_and_errors() {
        let mut store = SeriesStore::with_defaults();
        let tags = TagSet::from_pairs([("service", "checkout")]);
        // 600 requests over a 60 s window.
        store.write(&counter("requests_total", 600.0, 30_000, tags.clone()));
        for i in 0..6 {
            store.write(&MetricSample {
                name: "request_duration_ms".into(),
                kind: MetricKind::HistogramObservation,
                value: (i + 1) as f64,
                timestamp_ms: i * 10_000,
                tags: tags.clone(),
            });
        }
        let table = store
            .derived_view(
                &View::Red {
                    service: "checkout".into(),
                },
                0,
                60_000,
            )
            .unwrap();
        let row = |name: &str| {
            table
                .rows
                .iter()
                .find(|r| r[0] == name)
                .unwrap_or_else(|| panic!("row {name} in {table:?}"))[1]
                .clone()
        };
        assert_eq!(row("rate_per_s"), "10");
        assert_eq!(row("error_rate_per_s"), "0");
        assert_eq!(row("availability"), "1");
        assert_eq!(row("p50_ms"), "3");
        assert_eq!(row("p99_ms"), "6");
    }

    #[test]
    fn golden_view_joins_saturation_on_node_label() {
        let mut store = SeriesStore::with_defaults();
        let tags = TagSet::from_pairs([("service", "checkout"), ("node.label", "node-b")]);
        store.write(&counter("requests_total", 120.0, 30_000, tags.clone()));
        store.write(&MetricSample {
            name: "request_duration_ms".into(),
            kind: MetricKind::HistogramObservation,
            value: 8.0,
            timestamp_ms: 30_000,
            tags,
        });
        store.write(&gauge(
            "cpu_utilization_percent",
            67.5,
            40_000,
            TagSet::from_pairs([("node.label", "node-b")]),
        ));
        let table = store
            .derived_view(
                &View::Golden {
                    service: "checkout".into(),
                },
                0,
                60_000,
            )
            .unwrap();
        let row = |name: &str| table.rows.iter().find(|r| r[0] == name).unwrap()[1].clone();
        assert_eq!(row("saturation_percent"), "67.5");
        assert_eq!(row("node"), "node-b");
        // Missing infra series names the instrument.
        let mut no_infra = SeriesStore::with_defaults();
        let tags = TagSet::from_pairs([("service", "x"), ("node.label", "n")]);
        no_infra.write(&counter("requests_total", 1.0, 0, tags.clone()));
        no_infra.write(&MetricSample {
            name: "request_duration_ms".into(),
            kind: MetricKind::HistogramObservation,
            value: 1.0,
            timestamp_ms: 0,
            tags,
        });
        assert_eq!(
            no_infra.derived_view(
                &View::Golden {
                    service: "x".into()
                },
                0,
                100
            ),
            Err(MetricsError::MissingInstrument(
                "cpu_utilization_percent".into()
            ))
        );
    }

    #[test]
    fn red_view_missing_requests_names_instrument() {
        let store = SeriesStore::with_defaults();
        assert_eq!(
            store.derived_view(
                &View::Red {
                    service: "x".into()
                },
                0,
                1000
            ),
            Err(MetricsError::MissingInstrument("requests_total".into()))
        );
    }

    #[test]
    fn use_view_rows_per_resource_and_node() {
        let mut store = SeriesStore::with_defaults();
        let tags = TagSet::from_pairs([("node.label", "node-a")]);
        store.write(&gauge(
            "cpu_utilization_percent",
            40.0,
            10_000,
            tags.clone(),
        ));
        store.write(&gauge("cpu_saturation", 2.0, 10_000, tags.clone()));
        store.write(&counter("cpu_errors_total", 3.0, 10_000, tags));
        let table = store
            .derived_view(
                &View::Use {
                    resource: Some("cpu".into()),
                },
                0,
                60_000,
            )
            .unwrap();
        assert_eq!(table.rows.len(), 1);
        assert_eq!(table.rows[0], vec!["cpu", "node-a", "40", "2", "3"]);
    }

    #[test]
    fn exposition_parse_and_scrape_round_trip() {
        use crate::clock::ManualClock;
        use crate::sampling::SamplingPolicy;
        use crate::sdk::{ExportMode, Sdk, SdkConfig};
        use crate::wire::IdSource;

        let mut config = SdkConfig::new("checkout");
        config.export_mode = ExportMode::Pull;
        let sdk = Sdk::new(config, SamplingPolicy::keep_all(), IdSource::seeded(8));
        let clock = ManualClock::new(50_000_000);
        let c = sdk
            .register_counter(
                "requests_total",
                TagSet::from_pairs([("service", "checkout")]),
            )
            .unwrap();
        sdk.counter_add(&c, 41.0, &TagSet::empty(), &clock).unwrap();
        let g = sdk.register_gauge("queue_depth", TagSet::empty()).unwrap();
        sdk.gauge_set(&g, 7.25, &TagSet::empty(), &clock).unwrap();

        let body = sdk.expose_scrape(&clock);
        let parsed = parse_exposition(&body).unwrap();
        assert_eq!(parsed.len(), 2);

        struct Fixed(String);
        impl ScrapeTransport for Fixed {
            fn fetch(&mut self) -> Result<String, String> {
                Ok(self.0.clone())
            }
        }
        let mut svc = MetricsService::with_defaults();
        let outcome = svc.scrape_target("t1", &mut Fixed(body), 50);
        assert_eq!(outcome, ScrapeOutcome::Ingested(2));
        // Values land bit-exact with the exposition timestamps.
        let key = SeriesKey {
            name: "requests_total".into(),
            tags: TagSet::from_pairs([("service", "checkout")]),
        };
        assert_eq!(svc.store.tier_points(&key, 0), vec![(50_000, 41.0)]);
        let key = SeriesKey {
            name: "queue_depth".into(),
            tags: TagSet::empty(),
        };
        assert_eq!(svc.store.tier_points(&key, 0), vec![(50_000, 7.25)]);
        // up gauge set to 1 at the (aligned) scrape timestamp.
        let key = SeriesKey {
            name: "up".into(),
            tags: TagSet::from_pairs([("target", "t1")]),
        };
        assert_eq!(svc.store.tier_points(&key, 0), vec![(0, 1.0)]);
    }

    #[test]
    fn dead_target_counts_failure_and_zero_up() {
        struct Dead;
        impl ScrapeTransport for Dead {
            fn fetch(&mut self) -> Result<String, String> {
                Err("connection refused".into())
            }
        }
        let mut svc = MetricsService::with_defaults();
        let outcome = svc.scrape_target("t2", &mut Dead, 10_000);
        assert!(matches!(outcome, ScrapeOutcome::TargetUnreachable(_)));
        let up = SeriesKey {
            name: "up".into(),
            tags: TagSet::from_pairs([("target", "t2")]),
        };
        assert_eq!(svc.store.tier_points(&up, 0), vec![(10_000, 0.0)]);
        let failures = SeriesKey {
            name: "scrape_failures_total".into(),
            tags: TagSet::from_pairs([("target", "t2")]),
        };
        assert_eq!(svc.store.tier_points(&failures, 0), vec![(10_000, 1.0)]);
    }

    #[test]
    fn exposition_tag_escapes_round_trip() {
        let line = "m{k=\"a\\\"b\\\\c\\nd\"} 1 5";
        let parsed = parse_exposition(line).unwrap();
        assert_eq!(parsed[0].tags.get("k"), Some("a\"b\\c\nd"));
        assert!(parse_exposition("m{k=\"unterminated} 1").is_err());
        assert!(parse_exposition("Bad{} 1").is_err());
    }

    #[test]
    fn scraped_kind_suffix_inference() {
        assert_eq!(scraped_kind("requests_total"), MetricKind::Counter);
        assert_eq!(scraped_kind("lat_ms_bucket"), MetricKind::Counter);
        assert_eq!(scraped_kind("lat_ms_count"), MetricKind::Counter);
        assert_eq!(scraped_kind("lat_ms_sum"), MetricKind::Counter);
        assert_eq!(scraped_kind("queue_depth"), MetricKind::Gauge);
    }

    #[test]
    fn avg_downsample_bounded_by_min_max() {
        use crate::rng::SplitMix64;
        let tiers = vec![
            TierConfig {
                step_ms: 10_000,
                retention_ms: 60_000,
                aggregate: TierAggregate::Last,
            },
            TierConfig {
                step_ms: 60_000,
                retention_ms: 3_600_000,
                aggregate: TierAggregate::Avg,
            },
        ];
        let mut rng = SplitMix64::new(31);
        let mut store = SeriesStore::new(tiers, 10).unwrap();
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for i in 0..120 {
            let v = rng.next_f64() * 100.0;
            min = min.min(v);
            max = max.max(v);
            store.write(&gauge("m", v, i * 10_000, TagSet::empty()));
        }
        store.downsample(10_000 * 120 + 60_000);
        let key = SeriesKey {
            name: "m".into(),
            tags: TagSet::empty(),
        };
        for (_, v) in store.tier_points(&key, 1) {
            assert!(v >= min && v <= max);
        }
    }
}
