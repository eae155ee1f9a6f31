//! In-process durable broker: publish/subscribe topics with per-group
//! cursors, point-to-point queues, and request-reply correlation.
//!
//! Topics are single-partition append-only logs; every consumer group sees
//! every message in offset order. Queues deliver each message to exactly one
//! competing receiver, FIFO. Topic logs can be mirrored to append-only files
//! and reloaded on restart (at-least-once: group cursors are persisted after
//! each poll).

mod durable;
mod envelope;

pub use envelope::{headers, now_ms, Envelope};

use std::collections::{HashMap, VecDeque};
use std::path::PathBuf;
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum BusError {
    #[error("topic or queue name must be non-empty")]
    EmptyEndpointName,
    #[error("envelope destination must be non-empty")]
    EmptyDestination,
    #[error("envelope addressed to {destination:?} cannot go to {endpoint:?}")]
    DestinationMismatch { destination: String, endpoint: String },
    #[error("timed out after {waited_ms} ms waiting on {endpoint:?}")]
    Timeout { endpoint: String, waited_ms: u64 },
    #[error("timeout must be positive")]
    ZeroTimeout,
    #[error("io error: {0}")]
    Io(String),
    #[error("corrupt log {file} at record {record}: {reason}")]
    CorruptLog { file: String, record: usize, reason: String },
}

/// Consumer-group handle onto a topic. The cursor itself lives in the
/// broker so that every subscription of a group shares it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subscription {
    pub topic: String,
    pub group: String,
}

struct TopicState {
    entries: Vec<Arc<Envelope>>,
    cursors: HashMap<String, u64>,
    mirror: Option<durable::TopicMirror>,
}

struct QueueSlot {
    state: Mutex<VecDeque<Envelope>>,
    ready: Condvar,
}

/// The in-process broker.
pub struct Broker {
    topics: Mutex<HashMap<String, Arc<Mutex<TopicState>>>>,
    queues: Mutex<HashMap<String, Arc<QueueSlot>>>,
    durable_dir: Option<PathBuf>,
}

impl Default for Broker {
    fn default() -> Self {
        Self::new()
    }
}

impl Broker {
    /// Purely in-memory broker.
    pub fn new() -> Self {
        Self {
            topics: Mutex::new(HashMap::new()),
            queues: Mutex::new(HashMap::new()),
            durable_dir: None,
        }
    }

    /// Broker whose topic logs are mirrored under `dir`. Existing logs are
    /// reloaded lazily when a topic is first touched.
    pub fn with_durable_dir(dir: impl Into<PathBuf>) -> Self {
        Self {
            topics: Mutex::new(HashMap::new()),
            queues: Mutex::new(HashMap::new()),
            durable_dir: Some(dir.into()),
        }
    }

    fn topic(&self, name: &str) -> Result<Arc<Mutex<TopicState>>, BusError> {
        if name.is_empty() {
            return Err(BusError::EmptyEndpointName);
        }
        let mut topics = self.topics.lock().expect("topic registry poisoned");
        if let Some(t) = topics.get(name) {
            return Ok(Arc::clone(t));
        }
        let mut state = TopicState {
            entries: Vec::new(),
            cursors: HashMap::new(),
            mirror: None,
        };
        if let Some(dir) = &self.durable_dir {
            let log = durable::log_path(dir, name);
            if log.exists() {
                state.entries = durable::read_log(&log)?.into_iter().map(Arc::new).collect();
            }
            let cursors = durable::cursors_path(dir, name);
            if cursors.exists() {
                state.cursors = durable::read_cursors(&cursors)?;
            }
            state.mirror = Some(durable::TopicMirror::open(dir, name)?);
        }
        let slot = Arc::new(Mutex::new(state));
        topics.insert(name.to_string(), Arc::clone(&slot));
        Ok(slot)
    }

    fn queue(&self, name: &str) -> Result<Arc<QueueSlot>, BusError> {
        if name.is_empty() {
            return Err(BusError::EmptyEndpointName);
        }
        let mut queues = self.queues.lock().expect("queue registry poisoned");
        Ok(Arc::clone(queues.entry(name.to_string()).or_insert_with(|| {
            Arc::new(QueueSlot { state: Mutex::new(VecDeque::new()), ready: Condvar::new() })
        })))
    }

    fn check_addressed(env: &Envelope, endpoint: &str) -> Result<(), BusError> {
        if env.destination.is_empty() {
            return Err(BusError::EmptyDestination);
        }
        if env.destination != endpoint {
            return Err(BusError::DestinationMismatch {
                destination: env.destination.clone(),
                endpoint: endpoint.to_string(),
            });
        }
        Ok(())
    }

    /// Append to a topic log; returns the assigned offset.
    pub fn publish(&self, topic: &str, env: Envelope) -> Result<u64, BusError> {
        let slot = self.topic(topic)?;
        Self::check_addressed(&env, topic)?;
        let mut state = slot.lock().expect("topic poisoned");
        if let Some(mirror) = &mut state.mirror {
            mirror.append(&env)?;
        }
        let offset = state.entries.len() as u64;
        state.entries.push(Arc::new(env));
        Ok(offset)
    }

    /// Join (or create) a consumer group on a topic. A new group starts at
    /// offset 0; an existing group resumes at its cursor.
    pub fn subscribe(&self, topic: &str, group: &str) -> Result<Subscription, BusError> {
        let slot = self.topic(topic)?;
        let mut state = slot.lock().expect("topic poisoned");
        state.cursors.entry(group.to_string()).or_insert(0);
        Ok(Subscription { topic: topic.to_string(), group: group.to_string() })
    }

    /// Read up to `max` envelopes from the group cursor, advancing it.
    pub fn poll(&self, sub: &Subscription, max: usize) -> Result<Vec<Arc<Envelope>>, BusError> {
        assert!(max >= 1, "poll max must be >= 1");
        let slot = self.topic(&sub.topic)?;
        let mut state = slot.lock().expect("topic poisoned");
        let cursor = *state.cursors.get(&sub.group).unwrap_or(&0) as usize;
        let end = state.entries.len().min(cursor + max);
        let batch: Vec<Arc<Envelope>> = state.entries[cursor..end].iter().cloned().collect();
        if end > cursor {
            state.cursors.insert(sub.group.clone(), end as u64);
            let cursors = state.cursors.clone();
            if let Some(mirror) = &mut state.mirror {
                mirror.persist_cursors(&cursors)?;
            }
        }
        Ok(batch)
    }

    /// Current cursor of a group; also the number of acknowledged envelopes.
    pub fn group_cursor(&self, topic: &str, group: &str) -> Result<u64, BusError> {
        let slot = self.topic(topic)?;
        let state = slot.lock().expect("topic poisoned");
        Ok(*state.cursors.get(group).unwrap_or(&0))
    }

    /// Length of a topic log.
    pub fn topic_len(&self, topic: &str) -> Result<u64, BusError> {
        let slot = self.topic(topic)?;
        let state = slot.lock().expect("topic poisoned");
        Ok(state.entries.len() as u64)
    }

    /// Enqueue on a point-to-point queue.
    pub fn send(&self, queue: &str, env: Envelope) -> Result<(), BusError> {
        Self::check_addressed(&env, queue)?;
        let slot = self.queue(queue)?;
        slot.state.lock().expect("queue poisoned").push_back(env);
        slot.ready.notify_one();
        Ok(())
    }

    /// Dequeue, blocking up to `timeout`. Exactly one receiver gets each
    /// message; order is FIFO.
    pub fn receive(&self, queue: &str, timeout: Duration) -> Result<Envelope, BusError> {
        if timeout.is_zero() {
            return Err(BusError::ZeroTimeout);
        }
        let slot = self.queue(queue)?;
        let started = Instant::now();
        let mut state = slot.state.lock().expect("queue poisoned");
        loop {
            if let Some(env) = state.pop_front() {
                return Ok(env);
            }
            let remaining = timeout.saturating_sub(started.elapsed());
            if remaining.is_zero() {
                return Err(BusError::Timeout {
                    endpoint: queue.to_string(),
                    waited_ms: started.elapsed().as_millis() as u64,
                });
            }
            let (next, _) = slot
                .ready
                .wait_timeout(state, remaining)
                .expect("queue poisoned");
            state = next;
        }
    }

    /// Non-blocking dequeue.
    pub fn try_receive(&self, queue: &str) -> Result<Option<Envelope>, BusError> {
        let slot = self.queue(queue)?;
        let mut state = slot.state.lock().expect("queue poisoned");
        Ok(state.pop_front())
    }

    /// Send a request on `queue` and wait for the reply correlated to it.
    /// The responder must answer on the queue named in the reply-to header.
    pub fn request(&self, queue: &str, mut env: Envelope, timeout: Duration) -> Result<Envelope, BusError> {
        if timeout.is_zero() {
            return Err(BusError::ZeroTimeout);
        }
        let reply_queue = format!("reply.{}", env.id);
        env.headers.insert(headers::REPLY_TO.to_string(), reply_queue.clone());
        let request_id = env.id.clone();
        self.send(queue, env)?;

        let started = Instant::now();
        let result = loop {
            let remaining = timeout.saturating_sub(started.elapsed());
            if remaining.is_zero() {
                break Err(BusError::Timeout {
                    endpoint: queue.to_string(),
                    waited_ms: started.elapsed().as_millis() as u64,
                });
            }
            match self.receive(&reply_queue, remaining) {
                Ok(reply) if reply.correlation_id.as_deref() == Some(request_id.as_str()) => {
                    break Ok(reply);
                }
                // a mis-correlated reply is dropped, never delivered
                Ok(_) => continue,
                Err(BusError::Timeout { .. }) => {
                    break Err(BusError::Timeout {
                        endpoint: queue.to_string(),
                        waited_ms: started.elapsed().as_millis() as u64,
                    });
                }
                Err(other) => break Err(other),
            }
        };
        self.queues.lock().expect("queue registry poisoned").remove(&reply_queue);
        result
    }

    /// Answer a request envelope on its reply-to queue.
    pub fn reply(&self, request: &Envelope, payload: Value) -> Result<(), BusError> {
        match Envelope::reply_to(request, payload) {
            Some(reply) => {
                let dest = reply.destination.clone();
                self.send(&dest, reply)
            }
            None => Err(BusError::EmptyDestination),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;
    use std::thread;

    fn env(dest: &str, n: i64) -> Envelope {
        Envelope::to(dest, json!({ "n": n }))
    }

    #[test]
    fn first_publish_gets_offset_zero() {
        let broker = Broker::new();
        assert_eq!(broker.publish("grain.raw", env("grain.raw", 1)).unwrap(), 0);
    }

    #[test]
    fn offsets_are_monotone_in_call_order() {
        let broker = Broker::new();
        for want in 0..3u64 {
            assert_eq!(broker.publish("t", env("t", want as i64)).unwrap(), want);
        }
    }

    #[test]
    fn rejects_malformed_envelopes() {
        let broker = Broker::new();
        let mut bad = env("t", 1);
        bad.destination.clear();
        assert!(matches!(broker.publish("t", bad), Err(BusError::EmptyDestination)));
        assert!(matches!(
            broker.publish("t", env("elsewhere", 1)),
            Err(BusError::DestinationMismatch { .. })
        ));
        assert!(matches!(broker.publish("", env("", 1)), Err(BusError::EmptyEndpointName)));
    }

    #[test]
    fn poll_on_empty_topic_returns_nothing() {
        let broker = Broker::new();
        let sub = broker.subscribe("quiet", "g").unwrap();
        assert!(broker.poll(&sub, 10).unwrap().is_empty());
    }

    #[test]
    fn poll_respects_max_and_advances_cursor() {
        let broker = Broker::new();
        for i in 0..3 {
            broker.publish("t", env("t", i)).unwrap();
        }
        let sub = broker.subscribe("t", "g").unwrap();
        let batch = broker.poll(&sub, 2).unwrap();
        assert_eq!(batch.len(), 2);
        assert_eq!(batch[0].payload["n"], 0);
        assert_eq!(batch[1].payload["n"], 1);
        assert_eq!(broker.group_cursor("t", "g").unwrap(), 2);
        let rest = broker.poll(&sub, 2).unwrap();
        assert_eq!(rest.len(), 1);
        assert!(broker.poll(&sub, 2).unwrap().is_empty());
    }

    #[test]
    fn two_groups_both_see_everything() {
        let broker = Broker::new();
        for i in 0..10 {
            broker.publish("t", env("t", i)).unwrap();
        }
        let a = broker.subscribe("t", "a").unwrap();
        let b = broker.subscribe("t", "b").unwrap();
        assert_eq!(broker.poll(&a, 100).unwrap().len(), 10);
        assert_eq!(broker.poll(&b, 100).unwrap().len(), 10);
    }

    #[test]
    fn resubscribed_group_resumes_at_cursor() {
        let broker = Broker::new();
        for i in 0..10 {
            broker.publish("t", env("t", i)).unwrap();
        }
        let sub = broker.subscribe("t", "g").unwrap();
        assert_eq!(broker.poll(&sub, 5).unwrap().len(), 5);
        drop(sub);
        let again = broker.subscribe("t", "g").unwrap();
        let next = broker.poll(&again, 100).unwrap();
        assert_eq!(next.len(), 5);
        assert_eq!(next[0].payload["n"], 5);
    }

    #[test]
    fn interleaved_groups_never_skip_or_duplicate() {
        let broker = Broker::new();
        for i in 0..100 {
            broker.publish("t", env("t", i)).unwrap();
        }
        let a = broker.subscribe("t", "a").unwrap();
        let b = broker.subscribe("t", "b").unwrap();
        let mut seen_a = Vec::new();
        let mut seen_b = Vec::new();
        let mut step = 1;
        while seen_a.len() < 100 || seen_b.len() < 100 {
            for e in broker.poll(&a, step).unwrap() {
                seen_a.push(e.payload["n"].as_i64().unwrap());
            }
            for e in broker.poll(&b, step * 2).unwrap() {
                seen_b.push(e.payload["n"].as_i64().unwrap());
            }
            step = step % 7 + 1;
        }
        let want: Vec<i64> = (0..100).collect();
        assert_eq!(seen_a, want);
        assert_eq!(seen_b, want);
    }

    #[test]
    fn queue_send_then_receive_round_trips() {
        let broker = Broker::new();
        broker.send("q", env("q", 7)).unwrap();
        let got = broker.receive("q", Duration::from_millis(100)).unwrap();
        assert_eq!(got.payload["n"], 7);
    }

    #[test]
    fn receive_on_empty_queue_times_out() {
        let broker = Broker::new();
        let started = Instant::now();
        let err = broker.receive("empty", Duration::from_millis(50));
        assert!(matches!(err, Err(BusError::Timeout { .. })));
        assert!(started.elapsed() >= Duration::from_millis(50));
    }

    #[test]
    fn competing_receivers_partition_the_queue() {
        let broker = Arc::new(Broker::new());
        for i in 0..100 {
            broker.send("work", env("work", i)).unwrap();
        }
        let mut handles = Vec::new();
        for _ in 0..2 {
            let broker = Arc::clone(&broker);
            handles.push(thread::spawn(move || {
                let mut mine = Vec::new();
                while let Ok(e) = broker.receive("work", Duration::from_millis(40)) {
                    mine.push(e.payload["n"].as_i64().unwrap());
                }
                mine
            }));
        }
        let mut all: Vec<i64> = handles
            .into_iter()
            .flat_map(|h| h.join().unwrap())
            .collect();
        all.sort_unstable();
        assert_eq!(all, (0..100).collect::<Vec<i64>>());
    }

    #[test]
    fn request_reply_echo_correlates() {
        let broker = Arc::new(Broker::new());
        let responder = {
            let broker = Arc::clone(&broker);
            thread::spawn(move || {
                let req = broker.receive("svc", Duration::from_secs(2)).unwrap();
                broker.reply(&req, req.payload.clone()).unwrap();
            })
        };
        let reply = broker
            .request("svc", env("svc", 9), Duration::from_secs(2))
            .unwrap();
        assert_eq!(reply.payload["n"], 9);
        assert!(reply.correlation_id.is_some());
        responder.join().unwrap();
    }

    #[test]
    fn concurrent_requests_never_cross_deliver() {
        let broker = Arc::new(Broker::new());
        let responder = {
            let broker = Arc::clone(&broker);
            thread::spawn(move || {
                for _ in 0..2 {
                    let req = broker.receive("svc", Duration::from_secs(2)).unwrap();
                    let n = req.payload["n"].as_i64().unwrap();
                    broker.reply(&req, json!({ "n": n * 10 })).unwrap();
                }
            })
        };
        let mut callers = Vec::new();
        for n in [1i64, 2] {
            let broker = Arc::clone(&broker);
            callers.push(thread::spawn(move || {
                let reply = broker
                    .request("svc", env("svc", n), Duration::from_secs(2))
                    .unwrap();
                (n, reply.payload["n"].as_i64().unwrap())
            }));
        }
        for c in callers {
            let (n, got) = c.join().unwrap();
            assert_eq!(got, n * 10);
        }
        responder.join().unwrap();
    }

    #[test]
    fn silent_responder_times_out_within_tolerance() {
        let broker = Broker::new();
        let timeout = Duration::from_millis(500);
        let started = Instant::now();
        let err = broker.request("void", env("void", 1), timeout);
        let waited = started.elapsed();
        assert!(matches!(err, Err(BusError::Timeout { .. })));
        assert!(waited >= Duration::from_millis(450), "waited {waited:?}");
        assert!(waited <= Duration::from_millis(550), "waited {waited:?}");
    }

    #[test]
    fn miscorrelated_reply_is_dropped_not_delivered() {
        let broker = Arc::new(Broker::new());
        let responder = {
            let broker = Arc::clone(&broker);
            thread::spawn(move || {
                let req = broker.receive("svc", Duration::from_secs(2)).unwrap();
                let reply_queue = req.headers[headers::REPLY_TO].clone();
                // a stray message with the wrong correlation id first
                let stray = Envelope::to(reply_queue.clone(), json!({"stray": true}))
                    .with_correlation("nonsense");
                broker.send(&reply_queue, stray).unwrap();
                broker.reply(&req, json!({"real": true})).unwrap();
            })
        };
        let reply = broker
            .request("svc", env("svc", 5), Duration::from_secs(2))
            .unwrap();
        assert_eq!(reply.payload, json!({"real": true}));
        responder.join().unwrap();
    }

    #[test]
    fn durable_log_survives_reopen_and_resumes_cursor() {
        let dir = tempfile::tempdir().unwrap();
        {
            let broker = Broker::with_durable_dir(dir.path());
            for i in 0..10 {
                broker.publish("grain.raw", env("grain.raw", i)).unwrap();
            }
            let sub = broker.subscribe("grain.raw", "g").unwrap();
            assert_eq!(broker.poll(&sub, 4).unwrap().len(), 4);
        } // broker dropped: simulated crash

        let broker = Broker::with_durable_dir(dir.path());
        assert_eq!(broker.topic_len("grain.raw").unwrap(), 10);
        let sub = broker.subscribe("grain.raw", "g").unwrap();
        let rest = broker.poll(&sub, 100).unwrap();
        assert_eq!(rest.len(), 6);
        assert_eq!(rest[0].payload["n"], 4);
        // and the messages keep their content across the round trip
        assert_eq!(rest[5].payload["n"], 9);
    }

    #[test]
    fn durable_log_format_is_length_prefixed() {
        let dir = tempfile::tempdir().unwrap();
        let broker = Broker::with_durable_dir(dir.path());
        broker.publish("t", env("t", 1)).unwrap();
        broker.publish("t", env("t", 2)).unwrap();
        let raw = std::fs::read_to_string(dir.path().join("t.log")).unwrap();
        let mut lines = raw.split('\n');
        let len: usize = lines.next().unwrap().parse().unwrap();
        let body = lines.next().unwrap();
        assert_eq!(body.len(), len);
        let env: Envelope = serde_json::from_str(body).unwrap();
        assert_eq!(env.destination, "t");
    }

    #[test]
    fn blocked_receive_does_not_stall_other_queues() {
        let broker = Arc::new(Broker::new());
        let blocker = {
            let broker = Arc::clone(&broker);
            thread::spawn(move || broker.receive("idle", Duration::from_millis(300)))
        };
        thread::sleep(Duration::from_millis(30));
        // while the other thread blocks on "idle", this queue works fine
        broker.send("busy", env("busy", 1)).unwrap();
        let got = broker.receive("busy", Duration::from_millis(100)).unwrap();
        assert_eq!(got.payload["n"], 1);
        assert!(matches!(blocker.join().unwrap(), Err(BusError::Timeout { .. })));
    }
}
