//! Lightweight workflow engine: deploys declarative process graphs and
//! advances instances token by token.
//!
//! Tokens rest only on service nodes, which get a work envelope published to
//! their binding topic and wait for [`ProcessEngine::handle_completion`].
//! Splits, joins, gateways, and ends advance immediately. A single instance
//! advances under its own lock; distinct instances advance concurrently.

mod def;

pub use def::{
    Condition, DefinitionError, Edge, EdgeAction, EndOutcome, Node, NodeKind, Operand,
    ProcessDefinition,
};

use std::collections::{HashMap, VecDeque};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::bus::{headers, Broker, BusError, Envelope};
use crate::document::set_path;

/// Topic carrying escalation events for instances nobody can auto-resolve.
pub const MANUAL_REVIEW_TOPIC: &str = "ops.manual-review";

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Definition(#[from] DefinitionError),
    #[error("unknown definition {0:?}")]
    UnknownDefinition(String),
    #[error("unknown instance {0:?}")]
    UnknownInstance(String),
    #[error("stale completion for node {node:?} on instance {instance:?} (ignored)")]
    StaleCompletion { instance: String, node: String },
    #[error(transparent)]
    Bus(#[from] BusError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InstanceStatus {
    Running,
    Completed,
    ManualReview,
    Failed,
}

impl InstanceStatus {
    pub fn is_terminal(self) -> bool {
        self != Self::Running
    }
}

/// One live execution of a process definition.
#[derive(Debug, Clone)]
pub struct ProcessInstance {
    pub id: String,
    pub definition_id: String,
    pub variables: Map<String, Value>,
    /// service nodes currently holding a waiting token
    pub waiting: Vec<String>,
    /// arrivals per parallel join
    pub join_arrivals: HashMap<String, usize>,
    pub status: InstanceStatus,
    /// node ids in entry order (joins recorded when they fire)
    pub trace: Vec<String>,
    pub failure: Option<String>,
}

impl ProcessInstance {
    fn vars_value(&self) -> Value {
        Value::Object(self.variables.clone())
    }
}

static NEXT_INSTANCE: AtomicU64 = AtomicU64::new(1);

/// The workflow engine.
pub struct ProcessEngine {
    broker: Arc<Broker>,
    definitions: Mutex<HashMap<String, Arc<ProcessDefinition>>>,
    instances: Mutex<HashMap<String, Arc<Mutex<ProcessInstance>>>>,
}

impl ProcessEngine {
    pub fn new(broker: Arc<Broker>) -> Self {
        Self {
            broker,
            definitions: Mutex::new(HashMap::new()),
            instances: Mutex::new(HashMap::new()),
        }
    }

    /// Validate and store a definition; deployed definitions are immutable.
    pub fn deploy(&self, def: ProcessDefinition) -> Result<String, EngineError> {
        def.validate()?;
        let id = def.id.clone();
        self.definitions
            .lock()
            .expect("definitions poisoned")
            .insert(id.clone(), Arc::new(def));
        Ok(id)
    }

    fn definition(&self, id: &str) -> Result<Arc<ProcessDefinition>, EngineError> {
        self.definitions
            .lock()
            .expect("definitions poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| EngineError::UnknownDefinition(id.to_string()))
    }

    /// Start an instance with initial variables; advances until every
    /// active token waits on a service completion (or the instance ends).
    pub fn start_instance(&self, definition_id: &str, vars: Value) -> Result<String, EngineError> {
        let def = self.definition(definition_id)?;
        let id = format!("pi-{:06}", NEXT_INSTANCE.fetch_add(1, Ordering::Relaxed));
        let variables = match vars {
            Value::Object(map) => map,
            Value::Null => Map::new(),
            other => {
                let mut map = Map::new();
                map.insert("input".to_string(), other);
                map
            }
        };
        let instance = Arc::new(Mutex::new(ProcessInstance {
            id: id.clone(),
            definition_id: definition_id.to_string(),
            variables,
            waiting: Vec::new(),
            join_arrivals: HashMap::new(),
            status: InstanceStatus::Running,
            trace: Vec::new(),
            failure: None,
        }));
        self.instances
            .lock()
            .expect("instances poisoned")
            .insert(id.clone(), Arc::clone(&instance));

        let mut locked = instance.lock().expect("instance poisoned");
        let start = def.start_node().id.clone();
        self.advance(&def, &mut locked, vec![start]);
        Ok(id)
    }

    /// Deliver a service result. The token moves off the node and the
    /// instance advances. Completions for nodes that are not waiting are
    /// ignored (stale) and reported as such.
    pub fn handle_completion(
        &self,
        instance_id: &str,
        node_id: &str,
        result: Value,
    ) -> Result<InstanceStatus, EngineError> {
        let instance = self
            .instances
            .lock()
            .expect("instances poisoned")
            .get(instance_id)
            .cloned()
            .ok_or_else(|| EngineError::UnknownInstance(instance_id.to_string()))?;
        let def = {
            let locked = instance.lock().expect("instance poisoned");
            self.definition(&locked.definition_id)?
        };
        let mut locked = instance.lock().expect("instance poisoned");
        let Some(pos) = locked.waiting.iter().position(|n| n == node_id) else {
            log::warn!("stale completion: instance {instance_id} node {node_id}");
            return Err(EngineError::StaleCompletion {
                instance: instance_id.to_string(),
                node: node_id.to_string(),
            });
        };
        locked.waiting.remove(pos);
        if let Value::Object(fields) = result {
            for (k, v) in fields {
                locked.variables.insert(k, v);
            }
        }
        let next: Vec<String> = def.outgoing(node_id).iter().map(|e| e.to.clone()).collect();
        self.advance(&def, &mut locked, next);
        Ok(locked.status)
    }

    /// Walk tokens forward until they all rest on service nodes or the
    /// instance reaches a terminal status.
    fn advance(&self, def: &ProcessDefinition, inst: &mut ProcessInstance, entries: Vec<String>) {
        let mut queue: VecDeque<String> = entries.into();
        while let Some(node_id) = queue.pop_front() {
            if inst.status != InstanceStatus::Running {
                return;
            }
            let Some(node) = def.node(&node_id) else {
                self.fail(inst, format!("token reached unknown node {node_id:?}"));
                return;
            };
            match node.kind {
                NodeKind::Start => {
                    inst.trace.push(node_id.clone());
                    for e in def.outgoing(&node_id) {
                        queue.push_back(e.to.clone());
                    }
                }
                NodeKind::Service => {
                    inst.trace.push(node_id.clone());
                    inst.waiting.push(node_id.clone());
                    let binding = node.binding.clone().expect("validated service binding");
                    let work = Envelope::to(binding.clone(), inst.vars_value())
                        .with_header(headers::INSTANCE_ID, inst.id.clone())
                        .with_header(headers::NODE_ID, node_id.clone());
                    if let Err(e) = self.broker.publish(&binding, work) {
                        self.fail(inst, format!("work publication to {binding:?} failed: {e}"));
                        return;
                    }
                }
                NodeKind::ParallelSplit => {
                    inst.trace.push(node_id.clone());
                    for e in def.outgoing(&node_id) {
                        queue.push_back(e.to.clone());
                    }
                }
                NodeKind::ParallelJoin => {
                    let arrivals = inst.join_arrivals.entry(node_id.clone()).or_insert(0);
                    *arrivals += 1;
                    let expected = def.incoming_count(&node_id);
                    debug_assert!(*arrivals <= expected, "join overflow at {node_id}");
                    if *arrivals >= expected {
                        inst.join_arrivals.remove(&node_id);
                        inst.trace.push(node_id.clone());
                        for e in def.outgoing(&node_id) {
                            queue.push_back(e.to.clone());
                        }
                    }
                }
                NodeKind::ExclusiveGateway => {
                    inst.trace.push(node_id.clone());
                    let vars = inst.vars_value();
                    match def.choose_edge(&node_id, &vars) {
                        Ok(edge) => {
                            let to = edge.to.clone();
                            let actions = edge.actions.clone();
                            apply_actions(&mut inst.variables, &actions);
                            queue.push_back(to);
                        }
                        Err(reason) => {
                            self.fail(inst, format!("gateway {node_id:?}: {reason}"));
                            return;
                        }
                    }
                }
                NodeKind::End => {
                    inst.trace.push(node_id.clone());
                    if inst.waiting.is_empty() && queue.is_empty() {
                        inst.status = match node.outcome.unwrap_or_default() {
                            EndOutcome::Completed => InstanceStatus::Completed,
                            EndOutcome::ManualReview => InstanceStatus::ManualReview,
                            EndOutcome::Failed => InstanceStatus::Failed,
                        };
                        if inst.status == InstanceStatus::ManualReview {
                            self.publish_manual_review(inst);
                        }
                    }
                }
            }
        }
    }

    fn fail(&self, inst: &mut ProcessInstance, reason: String) {
        log::warn!("instance {} failed: {reason}", inst.id);
        inst.status = InstanceStatus::Failed;
        inst.failure = Some(reason);
    }

    fn publish_manual_review(&self, inst: &ProcessInstance) {
        let event = Envelope::to(
            MANUAL_REVIEW_TOPIC,
            json!({
                "instance_id": inst.id,
                "cycle_id": inst.variables.get("cycle_id").cloned().unwrap_or(Value::Null),
                "variables": Value::Object(inst.variables.clone()),
            }),
        );
        if let Err(e) = self.broker.publish(MANUAL_REVIEW_TOPIC, event) {
            log::error!("manual-review event publish failed: {e}");
        }
    }

    /// Snapshot of an instance.
    pub fn instance(&self, id: &str) -> Result<ProcessInstance, EngineError> {
        let instance = self
            .instances
            .lock()
            .expect("instances poisoned")
            .get(id)
            .cloned()
            .ok_or_else(|| EngineError::UnknownInstance(id.to_string()))?;
        let locked = instance.lock().expect("instance poisoned");
        Ok(locked.clone())
    }

    pub fn status(&self, id: &str) -> Result<InstanceStatus, EngineError> {
        Ok(self.instance(id)?.status)
    }
}

fn apply_actions(vars: &mut Map<String, Value>, actions: &[EdgeAction]) {
    for action in actions {
        match action {
            EdgeAction::Set { var, value } => {
                let mut doc = Value::Object(std::mem::take(vars));
                set_path(&mut doc, var, value.clone());
                *vars = match doc {
                    Value::Object(map) => map,
                    _ => unreachable!("document stays an object"),
                };
            }
            EdgeAction::Add { var, amount } => {
                let current = vars.get(var).and_then(Value::as_f64).unwrap_or(0.0);
                vars.insert(var.clone(), json!(current + amount));
            }
        }
    }
}
