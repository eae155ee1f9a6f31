//! EIP-style route engine binding bus endpoints, registered services, and
//! the dead-letter queue.
//!
//! Each started route runs on its own thread and processes its source
//! sequentially in arrival order. Step errors never crash a route; the
//! envelope diverts to the `dlq` queue with an error header.

mod def;

pub use def::{
    CmpOp, Comparison, Endpoint, FieldMap, Predicate, ProcessorStep, RouteDefinition, RouteFile,
    RouteRule,
};

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use serde_json::{Map, Value};
use thiserror::Error;

use crate::bus::{headers, Broker, BusError, Envelope};
use crate::document::{get_path, merge_fields, set_path};

/// Fixed sink for envelopes a route cannot process.
pub const DEAD_LETTER_QUEUE: &str = "dlq";

#[derive(Debug, Error)]
pub enum RouteError {
    #[error("route name must be non-empty")]
    EmptyName,
    #[error("route {0:?} is already registered")]
    DuplicateName(String),
    #[error("unresolvable endpoint {0}")]
    UnresolvableEndpoint(String),
    #[error("invalid step in route {route:?}: {reason}")]
    InvalidStep { route: String, reason: String },
    #[error("routes cannot be registered after the engine started")]
    AlreadyStarted,
    #[error(transparent)]
    Bus(#[from] BusError),
}

/// In-process handler reachable from routes (decision model, store, ...).
pub trait Service: Send + Sync {
    fn call(&self, payload: &Value) -> Result<Value, String>;
}

impl<F> Service for F
where
    F: Fn(&Value) -> Result<Value, String> + Send + Sync,
{
    fn call(&self, payload: &Value) -> Result<Value, String> {
        self(payload)
    }
}

struct AggregateBucket {
    merged: Value,
    received: usize,
    first_seen: Instant,
}

/// Engine holding registered routes and services.
pub struct RouteEngine {
    broker: Arc<Broker>,
    services: Mutex<HashMap<String, Arc<dyn Service>>>,
    routes: Mutex<Vec<RouteDefinition>>,
    workers: Mutex<Vec<JoinHandle<()>>>,
    stop: Arc<AtomicBool>,
    started: AtomicBool,
}

impl RouteEngine {
    pub fn new(broker: Arc<Broker>) -> Self {
        Self {
            broker,
            services: Mutex::new(HashMap::new()),
            routes: Mutex::new(Vec::new()),
            workers: Mutex::new(Vec::new()),
            stop: Arc::new(AtomicBool::new(false)),
            started: AtomicBool::new(false),
        }
    }

    pub fn broker(&self) -> Arc<Broker> {
        Arc::clone(&self.broker)
    }

    pub fn register_service(&self, name: impl Into<String>, service: Arc<dyn Service>) {
        self.services.lock().expect("services poisoned").insert(name.into(), service);
    }

    fn service(&self, name: &str) -> Option<Arc<dyn Service>> {
        self.services.lock().expect("services poisoned").get(name).cloned()
    }

    fn check_sink(&self, route: &str, endpoint: &Endpoint) -> Result<(), RouteError> {
        match endpoint {
            Endpoint::Topic(_) | Endpoint::Queue(_) => Ok(()),
            Endpoint::Service(name) => {
                if self.service(name).is_some() {
                    Ok(())
                } else {
                    Err(RouteError::UnresolvableEndpoint(format!("service:{name}")))
                }
            }
            Endpoint::Timer { .. } => Err(RouteError::InvalidStep {
                route: route.to_string(),
                reason: "timers cannot be delivery targets".into(),
            }),
        }
    }

    /// Validate and queue a route; it stays inactive until [`start`].
    ///
    /// [`start`]: RouteEngine::start
    pub fn register_route(&self, def: RouteDefinition) -> Result<(), RouteError> {
        if self.started.load(Ordering::SeqCst) {
            return Err(RouteError::AlreadyStarted);
        }
        if def.name.is_empty() {
            return Err(RouteError::EmptyName);
        }
        let mut routes = self.routes.lock().expect("routes poisoned");
        if routes.iter().any(|r| r.name == def.name) {
            return Err(RouteError::DuplicateName(def.name));
        }
        if matches!(def.from, Endpoint::Service(_)) {
            return Err(RouteError::UnresolvableEndpoint(format!(
                "route {:?} cannot consume from a service",
                def.name
            )));
        }
        for step in &def.steps {
            match step {
                ProcessorStep::ContentRoute { rules, default } => {
                    if rules.is_empty() {
                        return Err(RouteError::InvalidStep {
                            route: def.name,
                            reason: "content-route needs at least one rule".into(),
                        });
                    }
                    for rule in rules {
                        self.check_sink(&def.name, &rule.to)?;
                    }
                    self.check_sink(&def.name, default)?;
                }
                ProcessorStep::Aggregate { count, .. } => {
                    if *count < 1 {
                        return Err(RouteError::InvalidStep {
                            route: def.name,
                            reason: "aggregate completion count must be >= 1".into(),
                        });
                    }
                }
                ProcessorStep::Enrich { service } => {
                    if self.service(service).is_none() {
                        return Err(RouteError::UnresolvableEndpoint(format!("service:{service}")));
                    }
                }
                ProcessorStep::Translate { .. } | ProcessorStep::Filter { .. } => {}
            }
        }
        match &def.to {
            Some(to) => self.check_sink(&def.name, to)?,
            None => {
                let ends_in_router =
                    matches!(def.steps.last(), Some(ProcessorStep::ContentRoute { .. }));
                if !ends_in_router {
                    return Err(RouteError::InvalidStep {
                        route: def.name,
                        reason: "route needs a to endpoint unless it ends with a content-route".into(),
                    });
                }
            }
        }
        routes.push(def);
        Ok(())
    }

    /// Load every route in a route file document.
    pub fn register_route_file(&self, file: RouteFile) -> Result<(), RouteError> {
        for def in file.routes {
            self.register_route(def)?;
        }
        Ok(())
    }

    /// Spawn one worker per registered route.
    pub fn start(&self) -> Result<(), RouteError> {
        if self.started.swap(true, Ordering::SeqCst) {
            return Err(RouteError::AlreadyStarted);
        }
        let routes = self.routes.lock().expect("routes poisoned").clone();
        let mut workers = self.workers.lock().expect("workers poisoned");
        for def in routes {
            let worker = RouteWorker {
                broker: Arc::clone(&self.broker),
                services: self.snapshot_services(&def),
                def,
                stop: Arc::clone(&self.stop),
            };
            workers.push(std::thread::spawn(move || worker.run()));
        }
        Ok(())
    }

    fn snapshot_services(&self, def: &RouteDefinition) -> HashMap<String, Arc<dyn Service>> {
        let registry = self.services.lock().expect("services poisoned");
        let mut used = HashMap::new();
        let mut add = |name: &str| {
            if let Some(s) = registry.get(name) {
                used.insert(name.to_string(), Arc::clone(s));
            }
        };
        for step in &def.steps {
            match step {
                ProcessorStep::Enrich { service } => add(service),
                ProcessorStep::ContentRoute { rules, default } => {
                    for rule in rules {
                        if let Endpoint::Service(n) = &rule.to {
                            add(n);
                        }
                    }
                    if let Endpoint::Service(n) = default {
                        add(n);
                    }
                }
                _ => {}
            }
        }
        if let Some(Endpoint::Service(n)) = &def.to {
            add(n);
        }
        used
    }

    /// Signal workers and wait for them to finish.
    pub fn stop(&self) {
        self.stop.store(true, Ordering::SeqCst);
        let mut workers = self.workers.lock().expect("workers poisoned");
        for w in workers.drain(..) {
            let _ = w.join();
        }
    }
}

impl Drop for RouteEngine {
    fn drop(&mut self) {
        self.stop();
    }
}

struct RouteWorker {
    broker: Arc<Broker>,
    services: HashMap<String, Arc<dyn Service>>,
    def: RouteDefinition,
    stop: Arc<AtomicBool>,
}

enum StepFlow {
    Continue(Envelope),
    /// delivered elsewhere (content-route) or absorbed (aggregate, filter)
    Consumed,
}

impl RouteWorker {
    fn run(self) {
        let mut agg: HashMap<usize, HashMap<String, AggregateBucket>> = HashMap::new();
        match self.def.from.clone() {
            Endpoint::Topic(name) => {
                let group = format!("route.{}", self.def.name);
                let sub = match self.broker.subscribe(&name, &group) {
                    Ok(s) => s,
                    Err(e) => {
                        log::error!("route {}: subscribe failed: {e}", self.def.name);
                        return;
                    }
                };
                while !self.stop.load(Ordering::SeqCst) {
                    let batch = self.broker.poll(&sub, 16).unwrap_or_default();
                    if batch.is_empty() {
                        std::thread::sleep(Duration::from_millis(2));
                    }
                    for env in batch {
                        self.handle((*env).clone(), &mut agg);
                    }
                    self.flush_expired(&mut agg);
                }
            }
            Endpoint::Queue(name) => {
                while !self.stop.load(Ordering::SeqCst) {
                    match self.broker.receive(&name, Duration::from_millis(20)) {
                        Ok(env) => self.handle(env, &mut agg),
                        Err(BusError::Timeout { .. }) => {}
                        Err(e) => {
                            log::error!("route {}: receive failed: {e}", self.def.name);
                            return;
                        }
                    }
                    self.flush_expired(&mut agg);
                }
            }
            Endpoint::Timer { period_ms, count } => {
                for tick in 0..count {
                    if self.stop.load(Ordering::SeqCst) {
                        return;
                    }
                    let env = Envelope::to("timer", serde_json::json!({ "tick": tick }));
                    self.handle(env, &mut agg);
                    std::thread::sleep(Duration::from_millis(period_ms));
                    self.flush_expired(&mut agg);
                }
            }
            Endpoint::Service(_) => unreachable!("rejected at registration"),
        }
    }

    fn handle(&self, env: Envelope, agg: &mut HashMap<usize, HashMap<String, AggregateBucket>>) {
        match self.run_steps(env, 0, agg) {
            Ok(StepFlow::Continue(out)) => match &self.def.to {
                Some(to) => self.deliver(out, to),
                None => {
                    // validation guarantees a terminal content-route; if we
                    // get here the route swallowed the message
                    log::warn!("route {}: envelope completed without a sink", self.def.name);
                }
            },
            Ok(StepFlow::Consumed) => {}
            Err((env, reason)) => self.dead_letter(env, &reason),
        }
    }

    /// Run steps starting at `start`. Errors return the envelope for the
    /// dead-letter queue.
    fn run_steps(
        &self,
        env: Envelope,
        start: usize,
        agg: &mut HashMap<usize, HashMap<String, AggregateBucket>>,
    ) -> Result<StepFlow, (Envelope, String)> {
        let mut env = env;
        for (idx, step) in self.def.steps.iter().enumerate().skip(start) {
            match step {
                ProcessorStep::Translate { mapping, pass_through } => {
                    match translate(&env.payload, mapping, *pass_through) {
                        Ok(payload) => env.payload = payload,
                        Err(reason) => return Err((env, reason)),
                    }
                }
                ProcessorStep::Filter { predicate } => match predicate.evaluate(&env.payload) {
                    Ok(true) => {}
                    Ok(false) => return Ok(StepFlow::Consumed),
                    Err(reason) => return Err((env, reason)),
                },
                ProcessorStep::Enrich { service } => {
                    let svc = match self.services.get(service) {
                        Some(s) => s,
                        None => return Err((env, format!("service {service:?} not registered"))),
                    };
                    match svc.call(&env.payload) {
                        Ok(extra) => merge_fields(&mut env.payload, &extra),
                        Err(reason) => return Err((env, format!("enrich {service:?}: {reason}"))),
                    }
                }
                ProcessorStep::ContentRoute { rules, default } => {
                    for rule in rules {
                        match rule.when.evaluate(&env.payload) {
                            Ok(true) => {
                                self.deliver(env, &rule.to);
                                return Ok(StepFlow::Consumed);
                            }
                            Ok(false) => {}
                            Err(reason) => return Err((env, reason)),
                        }
                    }
                    self.deliver(env, default);
                    return Ok(StepFlow::Consumed);
                }
                ProcessorStep::Aggregate { key_path, count, .. } => {
                    let key = match get_path(&env.payload, key_path) {
                        Some(Value::String(s)) => s.clone(),
                        Some(other) => other.to_string(),
                        None => {
                            return Err((env, format!("aggregation key {key_path:?} missing")))
                        }
                    };
                    let buckets = agg.entry(idx).or_default();
                    let bucket = buckets.entry(key.clone()).or_insert_with(|| AggregateBucket {
                        merged: Value::Object(Map::new()),
                        received: 0,
                        first_seen: Instant::now(),
                    });
                    merge_fields(&mut bucket.merged, &env.payload);
                    bucket.received += 1;
                    if bucket.received >= *count {
                        let bucket = buckets.remove(&key).expect("bucket exists");
                        env = Envelope::to("pending", bucket.merged).with_correlation(key);
                    } else {
                        return Ok(StepFlow::Consumed);
                    }
                }
            }
        }
        Ok(StepFlow::Continue(env))
    }

    /// Emit timed-out aggregation buckets as partial aggregates.
    fn flush_expired(&self, agg: &mut HashMap<usize, HashMap<String, AggregateBucket>>) {
        let mut ready: Vec<(usize, String, AggregateBucket)> = Vec::new();
        for (idx, step) in self.def.steps.iter().enumerate() {
            let ProcessorStep::Aggregate { timeout_ms, .. } = step else {
                continue;
            };
            let Some(buckets) = agg.get_mut(&idx) else {
                continue;
            };
            let deadline = Duration::from_millis(*timeout_ms);
            let expired: Vec<String> = buckets
                .iter()
                .filter(|(_, b)| b.first_seen.elapsed() >= deadline)
                .map(|(k, _)| k.clone())
                .collect();
            for key in expired {
                if let Some(bucket) = buckets.remove(&key) {
                    ready.push((idx, key, bucket));
                }
            }
        }
        for (idx, key, bucket) in ready {
            let env = Envelope::to("pending", bucket.merged)
                .with_correlation(key)
                .with_header(headers::PARTIAL, "true");
            match self.run_steps(env, idx + 1, agg) {
                Ok(StepFlow::Continue(out)) => match &self.def.to {
                    Some(to) => self.deliver(out, to),
                    None => log::warn!("route {}: partial aggregate had no sink", self.def.name),
                },
                Ok(StepFlow::Consumed) => {}
                Err((env, reason)) => self.dead_letter(env, &reason),
            }
        }
    }

    fn deliver(&self, env: Envelope, endpoint: &Endpoint) {
        let result = match endpoint {
            Endpoint::Topic(name) => self
                .broker
                .publish(name, env.forwarded_to(name))
                .map(|_| ())
                .map_err(|e| (env, e.to_string())),
            Endpoint::Queue(name) => self
                .broker
                .send(name, env.forwarded_to(name))
                .map_err(|e| (env, e.to_string())),
            Endpoint::Service(name) => match self.services.get(name) {
                Some(svc) => svc.call(&env.payload).map(|_| ()).map_err(|e| (env, e)),
                None => Err((env, format!("service {name:?} not registered"))),
            },
            Endpoint::Timer { .. } => Err((env, "cannot deliver to a timer".into())),
        };
        if let Err((env, reason)) = result {
            self.dead_letter(env, &reason);
        }
    }

    fn dead_letter(&self, env: Envelope, reason: &str) {
        let dead = env
            .forwarded_to(DEAD_LETTER_QUEUE)
            .with_header(headers::ERROR, reason);
        if let Err(e) = self.broker.send(DEAD_LETTER_QUEUE, dead) {
            log::error!("route {}: dead-letter failed: {e}", self.def.name);
        }
    }
}

/// Message-translator core: rebuild a payload through a mapping table.
fn translate(payload: &Value, mapping: &[FieldMap], pass_through: bool) -> Result<Value, String> {
    let mut out = if pass_through {
        payload.clone()
    } else {
        Value::Object(Map::new())
    };
    for m in mapping {
        match get_path(payload, &m.from) {
            Some(v) => set_path(&mut out, &m.to, v.clone()),
            None if m.optional => {}
            None => return Err(format!("missing required field {:?}", m.from)),
        }
    }
    Ok(out)
}
