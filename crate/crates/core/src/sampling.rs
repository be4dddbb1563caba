//! Head-based, tail-based, dynamic and hybrid trace sampling.
//!
//! Head decisions hash the trace id so every participant reaches the same
//! verdict without coordination; tail rules run over fully assembled trace
//! trees, first match wins, and anything unmatched falls through to a salted
//! baseline hash so the baseline draw is independent of the head draw.

use std::collections::BTreeMap;

use thiserror::Error;

use crate::collector::TraceTree;
use crate::wire::{SpanStatus, TraceId};

/// Per-ingress-service head rates with a default for unlisted services.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadRates {
    pub default_rate: f64,
    pub per_service: BTreeMap<String, f64>,
}

impl HeadRates {
    pub fn keep_all() -> Self {
        Self {
            default_rate: 1.0,
            per_service: BTreeMap::new(),
        }
    }

    pub fn rate_for(&self, service: &str) -> f64 {
        *self.per_service.get(service).unwrap_or(&self.default_rate)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleAction {
    Keep,
    Drop,
}

/// Predicate of a tail rule.
#[derive(Debug, Clone, PartialEq)]
pub enum TailPredicate {
    /// Any span in the trace ended with ERROR status.
    AnyError,
    /// Root duration strictly above the threshold, optionally only for a
    /// specific root operation.
    RootDurationOver {
        threshold_us: u64,
        operation: Option<String>,
    },
    /// Any span carries this exact tag.
    TagEquals { key: String, value: String },
}

impl TailPredicate {
    pub fn name(&self) -> &'static str {
        match self {
            TailPredicate::AnyError => "any_error",
            TailPredicate::RootDurationOver { .. } => "root_duration_over",
            TailPredicate::TagEquals { .. } => "tag_equals",
        }
    }

    fn matches(&self, tree: &TraceTree) -> bool {
        match self {
            TailPredicate::AnyError => tree
                .nodes
                .iter()
                .any(|n| n.span.status == SpanStatus::Error),
            TailPredicate::RootDurationOver {
                threshold_us,
                operation,
            } => {
                let root = tree.root();
                if let Some(op) = operation {
                    if &root.span.operation != op {
                        return false;
                    }
                }
                root.span.duration_us > *threshold_us
            }
            TailPredicate::TagEquals { key, value } => tree
                .nodes
                .iter()
                .any(|n| n.span.tags.get(key).map(String::as_str) == Some(value.as_str())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TailRule {
    pub predicate: TailPredicate,
    pub action: SampleAction,
}

/// Complete sampling policy: head rates, ordered tail rules, baseline keep
/// probability for unmatched traces.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingPolicy {
    pub head: HeadRates,
    pub tail_rules: Vec<TailRule>,
    pub baseline_keep: f64,
}

impl SamplingPolicy {
    /// Keeps every trace at head and tail. Useful for offline analysis.
    pub fn keep_all() -> Self {
        Self {
            head: HeadRates::keep_all(),
            tail_rules: Vec::new(),
            baseline_keep: 1.0,
        }
    }

    /// The shipped default: keep error traces, keep slow traces (root over
    /// one second), baseline 10%.
    pub fn default_policy() -> Self {
        Self {
            head: HeadRates::keep_all(),
            tail_rules: vec![
                TailRule {
                    predicate: TailPredicate::AnyError,
                    action: SampleAction::Keep,
                },
                TailRule {
                    predicate: TailPredicate::RootDurationOver {
                        threshold_us: 1_000_000,
                        operation: None,
                    },
                    action: SampleAction::Keep,
                },
            ],
            baseline_keep: 0.1,
        }
    }
}

// ---------------------------------------------------------------------------
// Hashing
// ---------------------------------------------------------------------------

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

/// Salt XORed into the trace id before the baseline hash so baseline keeps
/// are statistically independent of head keeps.
const BASELINE_SALT: u128 = 0x9e37_79b9_7f4a_7c15_f39c_c060_5ced_c834;

/// FNV-1a over a byte slice. Trivial to reimplement identically anywhere.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = FNV_OFFSET;
    for b in bytes {
        h ^= u64::from(*b);
        h = h.wrapping_mul(FNV_PRIME);
    }
    h
}

/// Maps a hash into `[0, 1)` with 53 bits of precision.
pub fn normalize(hash: u64) -> f64 {
    (hash >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn trace_unit(trace_id: &TraceId, salt: u128) -> f64 {
    normalize(fnv1a64(&(trace_id.value() ^ salt).to_be_bytes()))
}

// ---------------------------------------------------------------------------
// Decisions
// ---------------------------------------------------------------------------

/// Deterministic head decision: keep iff the normalized id hash falls below
/// the ingress service's rate. The same trace id decides the same everywhere.
pub fn head_decide(policy: &SamplingPolicy, ingress_service: &str, trace_id: &TraceId) -> bool {
    let rate = policy.head.rate_for(ingress_service);
    if rate >= 1.0 {
        return true;
    }
    trace_unit(trace_id, 0) < rate
}

/// Tail decision over an assembled, skew-adjusted tree: first matching rule
/// wins; otherwise the salted baseline hash decides, reason `baseline`.
pub fn tail_decide(policy: &SamplingPolicy, tree: &TraceTree) -> (SampleAction, &'static str) {
    for rule in &policy.tail_rules {
        if rule.predicate.matches(tree) {
            return (rule.action, rule.predicate.name());
        }
    }
    let keep = if policy.baseline_keep >= 1.0 {
        true
    } else {
        trace_unit(&tree.trace_id, BASELINE_SALT) < policy.baseline_keep
    };
    (
        if keep {
            SampleAction::Keep
        } else {
            SampleAction::Drop
        },
        "baseline",
    )
}

/// Tallies from a tail-sampling pass; counts always conserve:
/// `evaluated == kept + dropped`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SamplingStats {
    pub evaluated: u64,
    pub kept_by_reason: BTreeMap<String, u64>,
    pub dropped: u64,
}

impl SamplingStats {
    pub fn kept(&self) -> u64 {
        self.kept_by_reason.values().sum()
    }
}

/// Runs the tail policy over a stream of trees, returning the retained ones
/// plus the stats.
pub fn apply(
    policy: &SamplingPolicy,
    trees: impl IntoIterator<Item = TraceTree>,
) -> (Vec<TraceTree>, SamplingStats) {
    let mut stats = SamplingStats::default();
    let mut kept = Vec::new();
    for tree in trees {
        stats.evaluated += 1;
        match tail_decide(policy, &tree) {
            (SampleAction::Keep, reason) => {
                *stats.kept_by_reason.entry(reason.to_string()).or_insert(0) += 1;
                kept.push(tree);
            }
            (SampleAction::Drop, _) => stats.dropped += 1,
        }
    }
    (kept, stats)
}

// ---------------------------------------------------------------------------
// Policy file
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("policy parse error at line {line}: {reason}")]
pub struct PolicyParseError {
    pub line: usize,
    pub reason: String,
}

/// Parses the plain-text policy format:
///
/// ```text
/// [head]
/// default = 0.1
/// checkout = 1.0
///
/// [tail]
/// rule = keep any_error
/// rule = keep root_duration_over 1000000
/// rule = drop tag_equals env staging
/// baseline = 0.1
/// ```
pub fn parse_policy(text: &str) -> Result<SamplingPolicy, PolicyParseError> {
    let mut policy = SamplingPolicy {
        head: HeadRates::keep_all(),
        tail_rules: Vec::new(),
        baseline_keep: 1.0,
    };
    let mut section = String::new();
    for (idx, raw_line) in text.lines().enumerate() {
        let line = raw_line.trim();
        let lineno = idx + 1;
        let err = |reason: &str| PolicyParseError {
            line: lineno,
            reason: reason.to_string(),
        };
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
            section = name.to_string();
            if section != "head" && section != "tail" {
                return Err(err(&format!("unknown section [{section}]")));
            }
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err("expected key = value"))?;
        let (key, value) = (key.trim(), value.trim());
        match (section.as_str(), key) {
            ("head", "default") => {
                policy.head.default_rate = parse_probability(value).map_err(|r| err(&r))?;
            }
            ("head", service) => {
                policy.head.per_service.insert(
                    service.to_string(),
                    parse_probability(value).map_err(|r| err(&r))?,
                );
            }
            ("tail", "baseline") => {
                policy.baseline_keep = parse_probability(value).map_err(|r| err(&r))?;
            }
            ("tail", "rule") => {
                policy
                    .tail_rules
                    .push(parse_rule(value).map_err(|r| err(&r))?);
            }
            _ => return Err(err(&format!("unexpected key {key:?}"))),
        }
    }
    Ok(policy)
}

fn parse_probability(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("bad probability {s:?}"))?;
    if !(0.0..=1.0).contains(&v) {
        return Err(format!("probability {v} outside [0, 1]"));
    }
    Ok(v)
}

fn parse_rule(s: &str) -> Result<TailRule, String> {
    let mut parts = s.split_whitespace();
    let action = match parts.next() {
        Some("keep") => SampleAction::Keep,
        Some("drop") => SampleAction::Drop,
        other => return Err(format!("rule action must be keep|drop, got {other:?}")),
    };
    let predicate = match parts.next() {
        Some("any_error") => TailPredicate::AnyError,
        Some("root_duration_over") => {
            let threshold_us: u64 = parts
                .next()
                .ok_or("root_duration_over needs a threshold in µs")?
                .parse()
                .map_err(|_| "bad threshold".to_string())?;
            if threshold_us == 0 {
                return Err("threshold must be positive".to_string());
            }
            TailPredicate::RootDurationOver {
                threshold_us,
                operation: parts.next().map(str::to_string),
            }
        }
        Some("tag_equals") => {
            let key = parts.next().ok_or("tag_equals needs key and value")?;
            let value = parts.next().ok_or("tag_equals needs key and value")?;
            TailPredicate::TagEquals {
                key: crate::wire::decode_field(key).map_err(|e| e.to_string())?,
                value: crate::wire::decode_field(value).map_err(|e| e.to_string())?,
            }
        }
        other => return Err(format!("unknown predicate {other:?}")),
    };
    if parts.next().is_some() {
        return Err("trailing tokens after rule".to_string());
    }
    Ok(TailRule { predicate, action })
}
