//! The routed message unit.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Reserved header names.
pub mod headers {
    /// queue that replies should be sent to
    pub const REPLY_TO: &str = "reply-to";
    /// bounded re-prediction counter
    pub const RETRY_COUNT: &str = "retry-count";
    /// set on dead-lettered envelopes
    pub const ERROR: &str = "error";
    /// set on aggregates emitted by timeout
    pub const PARTIAL: &str = "partial";
    /// workflow instance an envelope belongs to
    pub const INSTANCE_ID: &str = "instance-id";
    /// workflow node an envelope belongs to
    pub const NODE_ID: &str = "node-id";
}

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

fn next_id() -> String {
    format!("m-{:08}", NEXT_ID.fetch_add(1, Ordering::Relaxed))
}

pub fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

/// A routed message. Field order is the stable serialization order used by
/// the durable log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub id: String,
    pub correlation_id: Option<String>,
    pub destination: String,
    pub timestamp: u64,
    pub headers: BTreeMap<String, String>,
    pub payload: Value,
}

impl Envelope {
    /// New envelope addressed to a topic or queue, with a fresh unique id.
    pub fn to(destination: impl Into<String>, payload: Value) -> Self {
        Self {
            id: next_id(),
            correlation_id: None,
            destination: destination.into(),
            timestamp: now_ms(),
            headers: BTreeMap::new(),
            payload,
        }
    }

    /// Reply to `request` on its reply-to queue, correlated by its id.
    pub fn reply_to(request: &Envelope, payload: Value) -> Option<Self> {
        let destination = request.headers.get(headers::REPLY_TO)?.clone();
        Some(Self {
            id: next_id(),
            correlation_id: Some(request.id.clone()),
            destination,
            timestamp: now_ms(),
            headers: BTreeMap::new(),
            payload,
        })
    }

    /// Copy of this envelope readdressed to another endpoint (fresh id,
    /// correlation preserved).
    pub fn forwarded_to(&self, destination: impl Into<String>) -> Self {
        let mut copy = self.clone();
        copy.id = next_id();
        copy.destination = destination.into();
        copy
    }

    pub fn with_header(mut self, name: &str, value: impl Into<String>) -> Self {
        self.headers.insert(name.to_string(), value.into());
        self
    }

    pub fn with_correlation(mut self, correlation_id: impl Into<String>) -> Self {
        self.correlation_id = Some(correlation_id.into());
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn ids_are_unique() {
        let a = Envelope::to("t", json!({}));
        let b = Envelope::to("t", json!({}));
        assert_ne!(a.id, b.id);
    }

    #[test]
    fn reply_uses_reply_to_header_and_correlates() {
        let req = Envelope::to("q", json!({"ask": 1})).with_header(headers::REPLY_TO, "mybox");
        let rep = Envelope::reply_to(&req, json!({"answer": 2})).unwrap();
        assert_eq!(rep.destination, "mybox");
        assert_eq!(rep.correlation_id.as_deref(), Some(req.id.as_str()));
        let bare = Envelope::to("q", json!({}));
        assert!(Envelope::reply_to(&bare, json!({})).is_none());
    }

    #[test]
    fn serialization_field_order_is_stable() {
        let env = Envelope {
            id: "m-1".into(),
            correlation_id: None,
            destination: "grain.raw".into(),
            timestamp: 42,
            headers: BTreeMap::from([("b".into(), "2".into()), ("a".into(), "1".into())]),
            payload: json!({"hum_in": 25}),
        };
        let text = serde_json::to_string(&env).unwrap();
        let id_pos = text.find("\"id\"").unwrap();
        let corr_pos = text.find("\"correlation_id\"").unwrap();
        let dest_pos = text.find("\"destination\"").unwrap();
        let ts_pos = text.find("\"timestamp\"").unwrap();
        let hdr_pos = text.find("\"headers\"").unwrap();
        let pl_pos = text.find("\"payload\"").unwrap();
        assert!(id_pos < corr_pos && corr_pos < dest_pos && dest_pos < ts_pos);
        assert!(ts_pos < hdr_pos && hdr_pos < pl_pos);
        // headers are sorted by key
        assert!(text.find("\"a\"").unwrap() < text.find("\"b\"").unwrap());
    }
}
