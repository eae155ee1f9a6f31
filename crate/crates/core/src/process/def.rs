//! Declarative workflow graphs: nodes, edges, gateway conditions.

use std::collections::{HashSet, VecDeque};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::document::{as_number, get_path};
use crate::routes::CmpOp;

#[derive(Debug, Error, PartialEq)]
pub enum DefinitionError {
    #[error("definition must have exactly one start node, found {0}")]
    StartCount(usize),
    #[error("duplicate node id {0:?}")]
    DuplicateNode(String),
    #[error("edge references unknown node {0:?}")]
    UnknownNode(String),
    #[error("node {0:?} is unreachable from start")]
    Unreachable(String),
    #[error("node {node:?} must have {expected} outgoing edges, found {got}")]
    OutDegree { node: String, expected: String, got: usize },
    #[error("parallel split {0:?} has no matching join on every branch")]
    UnbalancedSplit(String),
    #[error("gateway {node:?} must have exactly one default edge, found {got}")]
    GatewayDefaults { node: String, got: usize },
    #[error("non-default edge {from:?} -> {to:?} on a gateway needs a condition")]
    GatewayNeedsCondition { from: String, to: String },
    #[error("service node {0:?} needs a binding endpoint")]
    MissingBinding(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeKind {
    Start,
    Service,
    ParallelSplit,
    ParallelJoin,
    ExclusiveGateway,
    End,
}

/// Terminal state a completed instance lands in.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EndOutcome {
    Completed,
    ManualReview,
    Failed,
}

impl Default for EndOutcome {
    fn default() -> Self {
        Self::Completed
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub id: String,
    pub kind: NodeKind,
    /// topic that receives work envelopes for service nodes
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub binding: Option<String>,
    /// terminal status for end nodes (default: completed)
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub outcome: Option<EndOutcome>,
}

impl Node {
    pub fn start(id: impl Into<String>) -> Self {
        Self { id: id.into(), kind: NodeKind::Start, binding: None, outcome: None }
    }

    pub fn service(id: impl Into<String>, binding: impl Into<String>) -> Self {
        Self { id: id.into(), kind: NodeKind::Service, binding: Some(binding.into()), outcome: None }
    }

    pub fn split(id: impl Into<String>) -> Self {
        Self { id: id.into(), kind: NodeKind::ParallelSplit, binding: None, outcome: None }
    }

    pub fn join(id: impl Into<String>) -> Self {
        Self { id: id.into(), kind: NodeKind::ParallelJoin, binding: None, outcome: None }
    }

    pub fn gateway(id: impl Into<String>) -> Self {
        Self { id: id.into(), kind: NodeKind::ExclusiveGateway, binding: None, outcome: None }
    }

    pub fn end(id: impl Into<String>, outcome: EndOutcome) -> Self {
        Self { id: id.into(), kind: NodeKind::End, binding: None, outcome: Some(outcome) }
    }
}

/// Right-hand side of a gateway condition: literal or another variable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Operand {
    Const(Value),
    Var(String),
}

/// `left <op> right` over instance variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub left: String,
    pub op: CmpOp,
    pub right: Operand,
}

impl Condition {
    pub fn var_vs_var(left: &str, op: CmpOp, right: &str) -> Self {
        Self { left: left.into(), op, right: Operand::Var(right.into()) }
    }

    pub fn var_vs_const(left: &str, op: CmpOp, value: impl Into<Value>) -> Self {
        Self { left: left.into(), op, right: Operand::Const(value.into()) }
    }

    pub fn evaluate(&self, variables: &Value) -> Result<bool, String> {
        let lhs = get_path(variables, &self.left)
            .ok_or_else(|| format!("variable {:?} missing", self.left))?;
        let rhs_owned;
        let rhs = match &self.right {
            Operand::Const(v) => v,
            Operand::Var(name) => {
                rhs_owned = get_path(variables, name)
                    .ok_or_else(|| format!("variable {name:?} missing"))?
                    .clone();
                &rhs_owned
            }
        };
        match self.op {
            CmpOp::Eq => Ok(lhs == rhs),
            CmpOp::Ne => Ok(lhs != rhs),
            op => {
                let l = as_number(lhs).ok_or_else(|| format!("variable {:?} not numeric", self.left))?;
                let r = as_number(rhs).ok_or_else(|| "comparison operand not numeric".to_string())?;
                Ok(match op {
                    CmpOp::Lt => l < r,
                    CmpOp::Le => l <= r,
                    CmpOp::Gt => l > r,
                    CmpOp::Ge => l >= r,
                    CmpOp::Eq | CmpOp::Ne => unreachable!(),
                })
            }
        }
    }
}

/// Variable mutation applied when an edge is taken.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EdgeAction {
    Set { var: String, value: Value },
    Add { var: String, amount: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub from: String,
    pub to: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub condition: Option<Condition>,
    #[serde(default)]
    pub default: bool,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub actions: Vec<EdgeAction>,
}

impl Edge {
    pub fn new(from: impl Into<String>, to: impl Into<String>) -> Self {
        Self { from: from.into(), to: to.into(), condition: None, default: false, actions: vec![] }
    }

    pub fn when(mut self, condition: Condition) -> Self {
        self.condition = Some(condition);
        self
    }

    pub fn default_edge(mut self) -> Self {
        self.default = true;
        self
    }

    pub fn with_action(mut self, action: EdgeAction) -> Self {
        self.actions.push(action);
        self
    }
}

/// The declarative workflow graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessDefinition {
    pub id: String,
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
}

impl ProcessDefinition {
    pub fn node(&self, id: &str) -> Option<&Node> {
        self.nodes.iter().find(|n| n.id == id)
    }

    pub fn outgoing(&self, id: &str) -> Vec<&Edge> {
        self.edges.iter().filter(|e| e.from == id).collect()
    }

    pub fn incoming_count(&self, id: &str) -> usize {
        self.edges.iter().filter(|e| e.to == id).count()
    }

    pub fn start_node(&self) -> &Node {
        self.nodes
            .iter()
            .find(|n| n.kind == NodeKind::Start)
            .expect("validated definitions have a start")
    }

    /// Structural validation; run before deployment.
    pub fn validate(&self) -> Result<(), DefinitionError> {
        let starts = self.nodes.iter().filter(|n| n.kind == NodeKind::Start).count();
        if starts != 1 {
            return Err(DefinitionError::StartCount(starts));
        }
        let mut ids = HashSet::new();
        for n in &self.nodes {
            if !ids.insert(n.id.as_str()) {
                return Err(DefinitionError::DuplicateNode(n.id.clone()));
            }
            if n.kind == NodeKind::Service && n.binding.is_none() {
                return Err(DefinitionError::MissingBinding(n.id.clone()));
            }
        }
        for e in &self.edges {
            for id in [&e.from, &e.to] {
                if !ids.contains(id.as_str()) {
                    return Err(DefinitionError::UnknownNode(id.clone()));
                }
            }
        }

        // reachability from start
        let start = self.nodes.iter().find(|n| n.kind == NodeKind::Start).unwrap();
        let mut seen = HashSet::new();
        let mut queue = VecDeque::from([start.id.as_str()]);
        while let Some(id) = queue.pop_front() {
            if !seen.insert(id) {
                continue;
            }
            for e in self.outgoing(id) {
                queue.push_back(&e.to);
            }
        }
        if let Some(n) = self.nodes.iter().find(|n| !seen.contains(n.id.as_str())) {
            return Err(DefinitionError::Unreachable(n.id.clone()));
        }

        // out-degree rules per node kind
        for n in &self.nodes {
            let out = self.outgoing(&n.id).len();
            match n.kind {
                NodeKind::Start | NodeKind::Service | NodeKind::ParallelJoin => {
                    if out != 1 {
                        return Err(DefinitionError::OutDegree {
                            node: n.id.clone(),
                            expected: "exactly 1".into(),
                            got: out,
                        });
                    }
                }
                NodeKind::ParallelSplit => {
                    if out < 2 {
                        return Err(DefinitionError::OutDegree {
                            node: n.id.clone(),
                            expected: "at least 2".into(),
                            got: out,
                        });
                    }
                }
                NodeKind::ExclusiveGateway => {
                    if out < 2 {
                        return Err(DefinitionError::OutDegree {
                            node: n.id.clone(),
                            expected: "at least 2".into(),
                            got: out,
                        });
                    }
                    let defaults = self.outgoing(&n.id).iter().filter(|e| e.default).count();
                    if defaults != 1 {
                        return Err(DefinitionError::GatewayDefaults {
                            node: n.id.clone(),
                            got: defaults,
                        });
                    }
                    for e in self.outgoing(&n.id) {
                        if !e.default && e.condition.is_none() {
                            return Err(DefinitionError::GatewayNeedsCondition {
                                from: e.from.clone(),
                                to: e.to.clone(),
                            });
                        }
                    }
                }
                NodeKind::End => {
                    if out != 0 {
                        return Err(DefinitionError::OutDegree {
                            node: n.id.clone(),
                            expected: "0".into(),
                            got: out,
                        });
                    }
                }
            }
        }

        // every split's branches must all reach one common join first
        for n in &self.nodes {
            if n.kind != NodeKind::ParallelSplit {
                continue;
            }
            let mut common: Option<HashSet<String>> = None;
            for branch in self.outgoing(&n.id) {
                let joins = self.first_joins_from(&branch.to);
                if joins.is_empty() {
                    return Err(DefinitionError::UnbalancedSplit(n.id.clone()));
                }
                common = Some(match common {
                    None => joins,
                    Some(prev) => prev.intersection(&joins).cloned().collect(),
                });
            }
            if common.map_or(true, |c| c.is_empty()) {
                return Err(DefinitionError::UnbalancedSplit(n.id.clone()));
            }
        }
        Ok(())
    }

    /// Joins reachable from `from` without passing through another join.
    fn first_joins_from(&self, from: &str) -> HashSet<String> {
        let mut found = HashSet::new();
        let mut seen = HashSet::new();
        let mut queue = VecDeque::from([from.to_string()]);
        while let Some(id) = queue.pop_front() {
            if !seen.insert(id.clone()) {
                continue;
            }
            let Some(node) = self.node(&id) else { continue };
            if node.kind == NodeKind::ParallelJoin {
                found.insert(id);
                continue;
            }
            for e in self.outgoing(&id) {
                queue.push_back(e.to.clone());
            }
        }
        found
    }

    /// Gateway edge selection: first condition that holds wins, otherwise
    /// the default edge. Missing variables surface as errors.
    pub fn choose_edge<'a>(&'a self, gateway: &str, variables: &Value) -> Result<&'a Edge, String> {
        let edges = self.outgoing(gateway);
        for e in &edges {
            if let Some(cond) = &e.condition {
                if cond.evaluate(variables)? {
                    return Ok(e);
                }
            }
        }
        edges
            .into_iter()
            .find(|e| e.default)
            .ok_or_else(|| format!("gateway {gateway:?} has no default edge"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn linear() -> ProcessDefinition {
        ProcessDefinition {
            id: "lin".into(),
            nodes: vec![
                Node::start("s"),
                Node::service("work", "topic.work"),
                Node::end("e", EndOutcome::Completed),
            ],
            edges: vec![Edge::new("s", "work"), Edge::new("work", "e")],
        }
    }

    #[test]
    fn linear_definition_validates() {
        linear().validate().unwrap();
    }

    #[test]
    fn split_without_join_is_rejected() {
        let def = ProcessDefinition {
            id: "bad".into(),
            nodes: vec![
                Node::start("s"),
                Node::split("fork"),
                Node::service("a", "t.a"),
                Node::service("b", "t.b"),
                Node::end("ea", EndOutcome::Completed),
                Node::end("eb", EndOutcome::Completed),
            ],
            edges: vec![
                Edge::new("s", "fork"),
                Edge::new("fork", "a"),
                Edge::new("fork", "b"),
                Edge::new("a", "ea"),
                Edge::new("b", "eb"),
            ],
        };
        assert_eq!(def.validate(), Err(DefinitionError::UnbalancedSplit("fork".into())));
    }

    #[test]
    fn two_defaults_on_gateway_are_rejected() {
        let def = ProcessDefinition {
            id: "bad".into(),
            nodes: vec![
                Node::start("s"),
                Node::gateway("g"),
                Node::end("a", EndOutcome::Completed),
                Node::end("b", EndOutcome::Completed),
            ],
            edges: vec![
                Edge::new("s", "g"),
                Edge::new("g", "a").default_edge(),
                Edge::new("g", "b").default_edge(),
            ],
        };
        assert_eq!(
            def.validate(),
            Err(DefinitionError::GatewayDefaults { node: "g".into(), got: 2 })
        );
    }

    #[test]
    fn unreachable_node_is_rejected() {
        let mut def = linear();
        def.nodes.push(Node::service("orphan", "t.o"));
        def.edges.push(Edge::new("orphan", "e"));
        assert_eq!(def.validate(), Err(DefinitionError::Unreachable("orphan".into())));
    }

    #[test]
    fn missing_start_and_duplicates_are_rejected() {
        let mut def = linear();
        def.nodes[0].kind = NodeKind::Service;
        def.nodes[0].binding = Some("t".into());
        assert_eq!(def.validate(), Err(DefinitionError::StartCount(0)));

        let mut dup = linear();
        dup.nodes.push(Node::end("e", EndOutcome::Completed));
        assert_eq!(dup.validate(), Err(DefinitionError::DuplicateNode("e".into())));
    }

    #[test]
    fn gateway_picks_first_true_condition_then_default() {
        let def = ProcessDefinition {
            id: "g".into(),
            nodes: vec![
                Node::start("s"),
                Node::gateway("gate"),
                Node::end("accept", EndOutcome::Completed),
                Node::end("reject", EndOutcome::ManualReview),
            ],
            edges: vec![
                Edge::new("s", "gate"),
                Edge::new("gate", "accept")
                    .when(Condition::var_vs_var("predicted_gas", CmpOp::Le, "gas_budget")),
                Edge::new("gate", "reject").default_edge(),
            ],
        };
        def.validate().unwrap();
        let vars = json!({"predicted_gas": 790.0, "gas_budget": 800.0});
        assert_eq!(def.choose_edge("gate", &vars).unwrap().to, "accept");
        let vars = json!({"predicted_gas": 810.0, "gas_budget": 800.0});
        assert_eq!(def.choose_edge("gate", &vars).unwrap().to, "reject");
        let missing = json!({"gas_budget": 800.0});
        assert!(def.choose_edge("gate", &missing).is_err());
    }

    #[test]
    fn definition_round_trips_through_json() {
        let def = linear();
        let text = serde_json::to_string_pretty(&def).unwrap();
        let back: ProcessDefinition = serde_json::from_str(&text).unwrap();
        assert_eq!(def, back);
    }
}
