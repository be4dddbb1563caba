//! Infrastructure metrics exporter: samples host resources (simulated
//! profiles here; real probes are adapters behind the same snapshot type)
//! and turns them into USE-method series — utilization, saturation, errors —
//! plus advisory scaling signals evaluated against thresholds.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::rng::SplitMix64;
use crate::wire::{MetricKind, MetricSample, TagSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Resource {
    Cpu,
    Memory,
    Disk,
    Network,
}

impl Resource {
    pub fn as_str(&self) -> &'static str {
        match self {
            Resource::Cpu => "cpu",
            Resource::Memory => "memory",
            Resource::Disk => "disk",
            Resource::Network => "network",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "cpu" => Some(Resource::Cpu),
            "memory" => Some(Resource::Memory),
            "disk" => Some(Resource::Disk),
            "network" => Some(Resource::Network),
            _ => None,
        }
    }
}

/// One sampling interval's view of one resource.
#[derive(Debug, Clone, PartialEq)]
pub struct ResourceSnapshot {
    pub resource: Resource,
    /// Time the resource was busy servicing work within the window.
    pub busy_ms: u64,
    pub window_ms: u64,
    /// Work queued that the resource could not service.
    pub queue_depth: u64,
    /// Cumulative error events.
    pub error_count: u64,
    pub capacity: f64,
    pub used: f64,
    pub node_tags: TagSet,
}

impl ResourceSnapshot {
    pub fn utilization_percent(&self) -> f64 {
        if self.window_ms == 0 {
            0.0
        } else {
            100.0 * self.busy_ms as f64 / self.window_ms as f64
        }
    }
}

/// USE triple for one snapshot: `<resource>_utilization_percent` (gauge),
/// `<resource>_saturation` (gauge, queue depth), `<resource>_errors_total`
/// (cumulative counter), all tagged with the node tags.
pub fn to_use_metrics(snapshot: &ResourceSnapshot, ts_ms: i64) -> Vec<MetricSample> {
    let res = snapshot.resource.as_str();
    vec![
        MetricSample {
            name: format!("{res}_utilization_percent"),
            kind: MetricKind::Gauge,
            value: snapshot.utilization_percent(),
            timestamp_ms: ts_ms,
            tags: snapshot.node_tags.clone(),
        },
        MetricSample {
            name: format!("{res}_saturation"),
            kind: MetricKind::Gauge,
            value: snapshot.queue_depth as f64,
            timestamp_ms: ts_ms,
            tags: snapshot.node_tags.clone(),
        },
        MetricSample {
            name: format!("{res}_errors_total"),
            kind: MetricKind::Counter,
            value: snapshot.error_count as f64,
            timestamp_ms: ts_ms,
            tags: snapshot.node_tags.clone(),
        },
    ]
}

// ---------------------------------------------------------------------------
// Simulated probes
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InfraError {
    #[error("probe unavailable for {0}")]
    ProbeUnavailable(String),
    #[error("profile parse error at line {line}: {reason}")]
    ProfileParse { line: usize, reason: String },
    #[error("need at least {needed} points, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("scaling threshold must be positive, got {0}")]
    BadThreshold(f64),
}

/// One piecewise segment of a load profile: `[t_start, t_end)` seconds from
/// profile start, busy level in `[0, 1]`, optional queue depth and error
/// increments per interval.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileSegment {
    pub t_start_s: u64,
    pub t_end_s: u64,
    pub level: f64,
    pub queue_depth: u64,
    pub errors_per_interval: u64,
}

/// Piecewise load curve for one resource, optionally jittered by a seeded
/// stream so repeated runs are identical.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadProfile {
    pub resource: Resource,
    pub segments: Vec<ProfileSegment>,
    pub jitter: f64,
}

impl LoadProfile {
    pub fn flat(resource: Resource, level: f64) -> Self {
        Self {
            resource,
            segments: vec![ProfileSegment {
                t_start_s: 0,
                t_end_s: u64::MAX,
                level,
                queue_depth: 0,
                errors_per_interval: 0,
            }],
            jitter: 0.0,
        }
    }

    fn segment_at(&self, t_s: u64) -> Option<&ProfileSegment> {
        self.segments
            .iter()
            .find(|s| t_s >= s.t_start_s && t_s < s.t_end_s)
    }
}

/// Parses the profile file format: one `[resource]` section per resource,
/// each line `t_start t_end level [queue [errors_per_interval]]`, plus an
/// optional `jitter = x` per section.
pub fn parse_profiles(text: &str) -> Result<Vec<LoadProfile>, InfraError> {
    let mut profiles: Vec<LoadProfile> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.trim();
        let lineno = idx + 1;
        let err = |reason: String| InfraError::ProfileParse {
            line: lineno,
            reason,
        };
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            let resource =
                Resource::parse(name).ok_or_else(|| err(format!("unknown resource {name:?}")))?;
            profiles.push(LoadProfile {
                resource,
                segments: Vec::new(),
                jitter: 0.0,
            });
            continue;
        }
        let current = profiles
            .last_mut()
            .ok_or_else(|| err("line before any [resource] section".to_string()))?;
        if let Some((key, value)) = line.split_once('=') {
            if key.trim() != "jitter" {
                return Err(err(format!("unknown key {:?}", key.trim())));
            }
            current.jitter = value
                .trim()
                .parse()
                .map_err(|_| err("bad jitter".to_string()))?;
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 3 || fields.len() > 5 {
            return Err(err(
                "expected: t_start t_end level [queue [errors]]".to_string()
            ));
        }
        let t_start_s: u64 = fields[0]
            .parse()
            .map_err(|_| err("bad t_start".to_string()))?;
        let t_end_s: u64 = fields[1]
            .parse()
            .map_err(|_| err("bad t_end".to_string()))?;
        let level: f64 = fields[2]
            .parse()
            .map_err(|_| err("bad level".to_string()))?;
        if !(0.0..=1.0).contains(&level) {
            return Err(err(format!("level {level} outside [0, 1]")));
        }
        if t_end_s <= t_start_s {
            return Err(err("t_end must exceed t_start".to_string()));
        }
        let queue_depth = match fields.get(3) {
            Some(q) => q.parse().map_err(|_| err("bad queue".to_string()))?,
            None => 0,
        };
        let errors_per_interval = match fields.get(4) {
            Some(e) => e.parse().map_err(|_| err("bad errors".to_string()))?,
            None => 0,
        };
        current.segments.push(ProfileSegment {
            t_start_s,
            t_end_s,
            level,
            queue_depth,
            errors_per_interval,
        });
    }
    Ok(profiles)
}

/// Deterministic resource sampler driven by load profiles. A resource whose
/// profile has a gap at the sampled instant reports `ProbeUnavailable`
/// without affecting the other resources.
#[derive(Debug)]
pub struct SimulatedSampler {
    profiles: Vec<LoadProfile>,
    node_tags: TagSet,
    start_ms: i64,
    interval_ms: u64,
    rng: SplitMix64,
    cumulative_errors: BTreeMap<Resource, u64>,
}

impl SimulatedSampler {
    pub fn new(
        profiles: Vec<LoadProfile>,
        node_tags: TagSet,
        start_ms: i64,
        interval_ms: u64,
        seed: u64,
    ) -> Self {
        Self {
            profiles,
            node_tags,
            start_ms,
            interval_ms,
            rng: SplitMix64::new(seed),
            cumulative_errors: BTreeMap::new(),
        }
    }

    /// One snapshot per configured resource at `now_ms`; per-resource probe
    /// failures are reported individually.
    pub fn sample(&mut self, now_ms: i64) -> Vec<Result<ResourceSnapshot, InfraError>> {
        let elapsed_s = ((now_ms - self.start_ms).max(0) as u64) / 1000;
        let mut out = Vec::new();
        for i in 0..self.profiles.len() {
            let (resource, segment, jitter) = {
                let p = &self.profiles[i];
                (p.resource, p.segment_at(elapsed_s).cloned(), p.jitter)
            };
            match segment {
                None => out.push(Err(InfraError::ProbeUnavailable(
                    resource.as_str().to_string(),
                ))),
                Some(seg) => {
                    let mut level = seg.level;
                    if jitter > 0.0 {
                        let noise = (self.rng.next_f64() * 2.0 - 1.0) * jitter;
                        level = (level + noise).clamp(0.0, 1.0);
                    }
                    let errors = self.cumulative_errors.entry(resource).or_insert(0);
                    *errors += seg.errors_per_interval;
                    out.push(Ok(ResourceSnapshot {
                        resource,
                        busy_ms: (level * self.interval_ms as f64).round() as u64,
                        window_ms: self.interval_ms,
                        queue_depth: seg.queue_depth,
                        error_count: *errors,
                        capacity: 100.0,
                        used: level * 100.0,
                        node_tags: self.node_tags.clone(),
                    }));
                }
            }
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Scaling signals
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingRule {
    pub metric: String,
    /// ScaleOut when the metric holds at or above this for
    /// `sustain_intervals` consecutive points; ScaleIn at or below half of
    /// it for the same span.
    pub threshold: f64,
    pub sustain_intervals: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalingSignal {
    None,
    ScaleOut,
    ScaleIn,
}

/// Advisory event; nothing acts on it.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingEvent {
    pub ts_ms: i64,
    pub signal: ScalingSignal,
}

fn signal_at(points: &[(i64, f64)], rule: &ScalingRule, end: usize) -> ScalingSignal {
    let window = &points[end + 1 - rule.sustain_intervals..=end];
    if window.iter().all(|(_, v)| *v >= rule.threshold) {
        ScalingSignal::ScaleOut
    } else if window.iter().all(|(_, v)| *v <= rule.threshold / 2.0) {
        ScalingSignal::ScaleIn
    } else {
        ScalingSignal::None
    }
}

/// Evaluates the rule over the trailing `sustain_intervals` points of the
/// series. Pure: same series and rule always give the same signal.
pub fn evaluate_scaling_signal(
    points: &[(i64, f64)],
    rule: &ScalingRule,
) -> Result<ScalingSignal, InfraError> {
    if rule.threshold <= 0.0 {
        return Err(InfraError::BadThreshold(rule.threshold));
    }
    if points.len() < rule.sustain_intervals || rule.sustain_intervals == 0 {
        return Err(InfraError::InsufficientData {
            needed: rule.sustain_intervals,
            got: points.len(),
        });
    }
    Ok(signal_at(points, rule, points.len() - 1))
}

/// Walks the whole series and emits one event per signal transition, stamped
/// with the point that completed the sustain window.
pub fn scan_scaling_events(
    points: &[(i64, f64)],
    rule: &ScalingRule,
) -> Result<Vec<ScalingEvent>, InfraError> {
    if rule.threshold <= 0.0 {
        return Err(InfraError::BadThreshold(rule.threshold));
    }
    if points.len() < rule.sustain_intervals || rule.sustain_intervals == 0 {
        return Err(InfraError::InsufficientData {
            needed: rule.sustain_intervals,
            got: points.len(),
        });
    }
    let mut events = Vec::new();
    let mut state = ScalingSignal::None;
    for end in (rule.sustain_intervals - 1)..points.len() {
        let signal = signal_at(points, rule, end);
        if signal != state {
            state = signal;
            if signal != ScalingSignal::None {
                events.push(ScalingEvent {
                    ts_ms: points[end].0,
                    signal,
                });
            }
        }
    }
    Ok(events)
}
