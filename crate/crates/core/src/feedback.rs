//! Learner ratings, interaction events and rating aggregation.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// The six rated dimensions, in report order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    ResponseSpeed,
    EaseOfUse,
    Accuracy,
    Relevance,
    Practicality,
    VisualAppeal,
}

impl Metric {
    pub const ALL: [Metric; 6] = [
        Metric::ResponseSpeed,
        Metric::EaseOfUse,
        Metric::Accuracy,
        Metric::Relevance,
        Metric::Practicality,
        Metric::VisualAppeal,
    ];

    pub fn key(self) -> &'static str {
        match self {
            Metric::ResponseSpeed => "response_speed",
            Metric::EaseOfUse => "ease_of_use",
            Metric::Accuracy => "accuracy",
            Metric::Relevance => "relevance",
            Metric::Practicality => "practicality",
            Metric::VisualAppeal => "visual_appeal",
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Metric::ResponseSpeed => "Response Speed",
            Metric::EaseOfUse => "Ease of Use",
            Metric::Accuracy => "Accuracy",
            Metric::Relevance => "Relevance",
            Metric::Practicality => "Practicality",
            Metric::VisualAppeal => "Visual Appeal",
        }
    }

    pub fn from_key(key: &str) -> Option<Metric> {
        Metric::ALL.into_iter().find(|m| m.key() == key)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FeedbackError {
    #[error("unknown metric {0:?}")]
    UnknownMetric(String),
    #[error("rating {value} for {metric} is outside 1..=5")]
    OutOfRange { metric: &'static str, value: i64 },
    #[error("no ratings given")]
    Empty,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeedbackRecord {
    pub session_id: String,
    /// `None` rates the whole session.
    pub turn_index: Option<u64>,
    pub ratings: BTreeMap<Metric, u8>,
    #[serde(default)]
    pub free_text: Option<String>,
    pub timestamp: u64,
}

/// Turn loosely typed `name -> value` ratings into checked ones.
pub fn parse_ratings<'a, I>(raw: I) -> Result<BTreeMap<Metric, u8>, FeedbackError>
where
    I: IntoIterator<Item = (&'a str, i64)>,
{
    let mut out = BTreeMap::new();
    for (name, value) in raw {
        let metric = Metric::from_key(name).ok_or_else(|| FeedbackError::UnknownMetric(String::from(name)))?;
        if !(1..=5).contains(&value) {
            return Err(FeedbackError::OutOfRange { metric: metric.key(), value });
        }
        out.insert(metric, value as u8);
    }
    if out.is_empty() {
        return Err(FeedbackError::Empty);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub metric: Metric,
    pub mean: f64,
    /// Population standard deviation.
    pub std_dev: f64,
    pub n: u64,
}

#[derive(Default, Clone, Copy)]
struct Running {
    n: u64,
    mean: f64,
    m2: f64,
}

impl Running {
    fn push(&mut self, x: f64) {
        self.n += 1;
        let delta = x - self.mean;
        self.mean += delta / self.n as f64;
        self.m2 += delta * (x - self.mean);
    }
}

/// Per-metric mean and population standard deviation in one pass.
///
/// Metrics nobody rated are left out; the rest come back in report order.
pub fn aggregate_metrics<'a, I>(records: I) -> Vec<MetricSummary>
where
    I: IntoIterator<Item = &'a FeedbackRecord>,
{
    let mut acc = [Running::default(); 6];
    for rec in records {
        for (metric, value) in &rec.ratings {
            acc[*metric as usize].push(f64::from(*value));
        }
    }
    Metric::ALL
        .into_iter()
        .zip(acc)
        .filter(|(_, r)| r.n > 0)
        .map(|(metric, r)| MetricSummary {
            metric,
            mean: r.mean,
            std_dev: libm::sqrt((r.m2 / r.n as f64).max(0.0)),
            n: r.n,
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    TurnCompleted,
    PlanCreated,
    PlanRevised,
    ScaffoldChanged,
    RetrievalPerformed,
    GatewayError,
    FeedbackSubmitted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteractionEvent {
    pub event_id: String,
    pub session_id: String,
    pub kind: EventKind,
    pub payload: serde_json::Value,
    pub timestamp: u64,
    /// Commit order assigned by the journal; 0 until committed.
    #[serde(default)]
    pub seq: u64,
}
