//! Declarative route definitions: endpoints, processor steps, predicates.

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::document::{as_number, get_path};

/// Where a route reads from or writes to.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Endpoint {
    Topic(String),
    Queue(String),
    /// Registered in-process handler (model, store, simulator, ...).
    Service(String),
    /// Emits `count` empty ticks spaced `period_ms` apart.
    Timer { period_ms: u64, count: u64 },
}

impl Endpoint {
    pub fn topic(name: impl Into<String>) -> Self {
        Self::Topic(name.into())
    }

    pub fn queue(name: impl Into<String>) -> Self {
        Self::Queue(name.into())
    }

    pub fn service(name: impl Into<String>) -> Self {
        Self::Service(name.into())
    }

    /// Name as used for envelope destinations.
    pub fn address(&self) -> String {
        match self {
            Self::Topic(n) | Self::Queue(n) | Self::Service(n) => n.clone(),
            Self::Timer { period_ms, count } => format!("timer:{period_ms}/{count}"),
        }
    }
}

impl std::fmt::Display for Endpoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Topic(n) => write!(f, "topic:{n}"),
            Self::Queue(n) => write!(f, "queue:{n}"),
            Self::Service(n) => write!(f, "service:{n}"),
            Self::Timer { period_ms, count } => write!(f, "timer:{period_ms}/{count}"),
        }
    }
}

impl From<Endpoint> for String {
    fn from(e: Endpoint) -> String {
        e.to_string()
    }
}

impl TryFrom<String> for Endpoint {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| format!("endpoint {s:?} needs a kind prefix like topic:name"))?;
        if rest.is_empty() {
            return Err(format!("endpoint {s:?} has an empty name"));
        }
        match kind {
            "topic" => Ok(Self::Topic(rest.to_string())),
            "queue" => Ok(Self::Queue(rest.to_string())),
            "service" => Ok(Self::Service(rest.to_string())),
            "timer" => {
                let (period, count) = rest
                    .split_once('/')
                    .ok_or_else(|| format!("timer endpoint {s:?} must be timer:<period_ms>/<count>"))?;
                Ok(Self::Timer {
                    period_ms: period.parse().map_err(|e| format!("bad timer period: {e}"))?,
                    count: count.parse().map_err(|e| format!("bad timer count: {e}"))?,
                })
            }
            other => Err(format!("unknown endpoint kind {other:?}")),
        }
    }
}

/// Comparator in route predicates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CmpOp {
    #[serde(rename = "=")]
    Eq,
    #[serde(rename = "!=")]
    Ne,
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
}

/// `path <op> literal` over an envelope payload.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub path: String,
    pub op: CmpOp,
    pub value: Value,
}

impl Comparison {
    pub fn evaluate(&self, payload: &Value) -> Result<bool, String> {
        let found = get_path(payload, &self.path)
            .ok_or_else(|| format!("predicate path {:?} missing from payload", self.path))?;
        match self.op {
            CmpOp::Eq => Ok(found == &self.value),
            CmpOp::Ne => Ok(found != &self.value),
            op => {
                let lhs = as_number(found)
                    .ok_or_else(|| format!("predicate path {:?} is not numeric", self.path))?;
                let rhs = as_number(&self.value)
                    .ok_or_else(|| format!("predicate literal for {:?} is not numeric", self.path))?;
                Ok(match op {
                    CmpOp::Lt => lhs < rhs,
                    CmpOp::Le => lhs <= rhs,
                    CmpOp::Gt => lhs > rhs,
                    CmpOp::Ge => lhs >= rhs,
                    CmpOp::Eq | CmpOp::Ne => unreachable!(),
                })
            }
        }
    }
}

/// AND-list of comparisons; empty list is vacuously true.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Predicate {
    pub all: Vec<Comparison>,
}

impl Predicate {
    pub fn new(all: Vec<Comparison>) -> Self {
        Self { all }
    }

    pub fn compare(path: &str, op: CmpOp, value: impl Into<Value>) -> Self {
        Self {
            all: vec![Comparison { path: path.to_string(), op, value: value.into() }],
        }
    }

    pub fn evaluate(&self, payload: &Value) -> Result<bool, String> {
        for c in &self.all {
            if !c.evaluate(payload)? {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// One field move in a translate step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldMap {
    pub from: String,
    pub to: String,
    #[serde(default)]
    pub optional: bool,
}

/// One branch of a content-based router.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteRule {
    pub when: Predicate,
    pub to: Endpoint,
}

/// Message-processing step inside a route.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProcessorStep {
    /// Rebuild the payload from a field-mapping table.
    Translate {
        mapping: Vec<FieldMap>,
        #[serde(default)]
        pass_through: bool,
    },
    /// First matching rule wins; no match goes to the default endpoint.
    ContentRoute {
        rules: Vec<RouteRule>,
        default: Endpoint,
    },
    /// Merge `count` payloads sharing a correlation key into one envelope.
    Aggregate {
        key_path: String,
        count: usize,
        timeout_ms: u64,
    },
    /// Call a service and merge its result fields into the payload.
    Enrich { service: String },
    /// Pass only payloads matching the predicate.
    Filter { predicate: Predicate },
}

/// A named flow from one endpoint through steps to another.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteDefinition {
    pub name: String,
    pub from: Endpoint,
    #[serde(default)]
    pub steps: Vec<ProcessorStep>,
    #[serde(default)]
    pub to: Option<Endpoint>,
}

/// A loadable document holding several route definitions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RouteFile {
    pub routes: Vec<RouteDefinition>,
}
