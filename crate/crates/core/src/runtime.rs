//! Closed-loop cycle runtime: wires the broker, route engine, workflow
//! engine, store, simulator, and a decision model into the drying loop.
//!
//! Per cycle: two parallel sensor collections join into one record, the
//! record is persisted, the model proposes setpoints, a gateway accepts them
//! only when predicted gas fits the budget (otherwise it lowers the
//! temperature and re-predicts, at most `max_retries` times), accepted
//! setpoints go to the boiler queue, and the measured outcome completes the
//! record. Escalations land on the ops topic as manual-review events.

use std::collections::HashMap;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::anfis::AnfisModel;
use crate::bus::{headers, now_ms, Broker};
use crate::cycle::{CycleInputs, CycleRecord, CycleStatus, Prediction, Setpoints};
use crate::gpr::GprModel;
use crate::process::{
    Condition, Edge, EdgeAction, EndOutcome, InstanceStatus, Node, ProcessDefinition,
    ProcessEngine,
};
use crate::routes::{CmpOp, Endpoint, ProcessorStep, RouteDefinition, RouteEngine, RouteFile};
use crate::sim::PlantModel;
use crate::store::CycleStore;

/// Work topics the engine publishes to, one per service node.
pub mod topics {
    pub const COLLECT_HUMIDITY: &str = "work.collect.humidity";
    pub const COLLECT_WEIGHT: &str = "work.collect.weight";
    pub const PERSIST: &str = "work.persist";
    pub const PREDICT: &str = "work.predict";
    pub const DISPATCH: &str = "work.dispatch";
}

/// Queues of the closed loop.
pub mod queues {
    pub const BOILER_SETPOINTS: &str = "boiler.setpoints";
    pub const COMPLETIONS: &str = "engine.completions";
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("cycle {cycle_id} did not reach a terminal status within {waited_ms} ms")]
    CycleTimeout { cycle_id: String, waited_ms: u64 },
    #[error("model error: {0}")]
    Model(String),
    #[error(transparent)]
    Engine(#[from] crate::process::EngineError),
    #[error(transparent)]
    Routes(#[from] crate::routes::RouteError),
    #[error(transparent)]
    Bus(#[from] crate::bus::BusError),
    #[error(transparent)]
    Store(#[from] crate::store::StoreError),
    #[error(transparent)]
    Cycle(#[from] crate::cycle::CycleError),
}

/// Regressor interface shared by both decision models; the runtime
/// addresses a model by name.
pub trait DecisionModel: Send + Sync {
    fn model_name(&self) -> &str;
    /// Predicted extraction time in hours for (target humidity, input
    /// humidity, weight).
    fn predict_time(&self, features: &[f64]) -> Result<f64, String>;
}

impl DecisionModel for AnfisModel<f64> {
    fn model_name(&self) -> &str {
        "anfis"
    }

    fn predict_time(&self, features: &[f64]) -> Result<f64, String> {
        self.predict(features).map(|o| o.value).map_err(|e| e.to_string())
    }
}

impl DecisionModel for GprModel<f64> {
    fn model_name(&self) -> &str {
        "gpr"
    }

    fn predict_time(&self, features: &[f64]) -> Result<f64, String> {
        self.predict(features).map(|o| o.mean).map_err(|e| e.to_string())
    }
}

/// Knobs of the closed loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoopConfig {
    /// budget = factor x oracle-optimal gas
    pub gas_budget_factor: f64,
    pub max_retries: u32,
    /// °C removed from the proposal on each re-prediction
    pub retry_temperature_bias: f64,
    /// spread of the initial temperature proposal around the optimum, °C
    pub proposal_temp_sigma: f64,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            gas_budget_factor: 1.10,
            max_retries: 3,
            retry_temperature_bias: 2.0,
            proposal_temp_sigma: 8.0,
        }
    }
}

/// The canonical drying-process graph.
pub fn grain_drying_definition(config: &LoopConfig) -> ProcessDefinition {
    ProcessDefinition {
        id: "grain-drying".into(),
        nodes: vec![
            Node::start("start"),
            Node::split("fan_out"),
            Node::service("collect_humidity", topics::COLLECT_HUMIDITY),
            Node::service("collect_weight", topics::COLLECT_WEIGHT),
            Node::join("join_inputs"),
            Node::service("persist_inputs", topics::PERSIST),
            Node::service("predict_setpoints", topics::PREDICT),
            Node::gateway("gas_gate"),
            Node::service("dispatch_setpoints", topics::DISPATCH),
            Node::end("done", EndOutcome::Completed),
            Node::end("manual_review", EndOutcome::ManualReview),
        ],
        edges: vec![
            Edge::new("start", "fan_out"),
            Edge::new("fan_out", "collect_humidity"),
            Edge::new("fan_out", "collect_weight"),
            Edge::new("collect_humidity", "join_inputs"),
            Edge::new("collect_weight", "join_inputs"),
            Edge::new("join_inputs", "persist_inputs"),
            Edge::new("persist_inputs", "predict_setpoints"),
            Edge::new("predict_setpoints", "gas_gate"),
            Edge::new("gas_gate", "dispatch_setpoints")
                .when(Condition::var_vs_var("predicted_gas", CmpOp::Le, "gas_budget")),
            Edge::new("gas_gate", "predict_setpoints")
                .when(Condition::var_vs_const("retry_count", CmpOp::Lt, config.max_retries))
                .with_action(EdgeAction::Add { var: "retry_count".into(), amount: 1.0 })
                .with_action(EdgeAction::Add {
                    var: "proposed_temperature".into(),
                    amount: -config.retry_temperature_bias,
                }),
            Edge::new("gas_gate", "manual_review").default_edge(),
            Edge::new("dispatch_setpoints", "done"),
        ],
    }
}

/// Stable 64-bit hash for deriving per-cycle rng streams.
fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Seed for one cycle's named rng stream.
pub fn derive_seed(seed: u64, cycle_id: &str, stream: &str) -> u64 {
    fnv1a(format!("{seed}/{cycle_id}/{stream}").as_bytes())
}

/// How one cycle went, as observed by the orchestrator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRun {
    pub cycle_id: String,
    pub status: InstanceStatus,
    pub trace: Vec<String>,
    pub retry_count: u32,
    pub predicted_gas: Option<f64>,
    pub gas_budget: Option<f64>,
    pub predicted_time: Option<f64>,
    pub dispatched_temperature: Option<f64>,
}

/// Outcome of a run-cycles invocation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub model_name: String,
    pub cycles: Vec<CycleRun>,
}

impl RunSummary {
    pub fn count_with_status(&self, status: InstanceStatus) -> usize {
        self.cycles.iter().filter(|c| c.status == status).count()
    }
}

/// Optional wiring extensions for a runtime.
#[derive(Default)]
pub struct RuntimeOptions {
    /// extra routes started alongside the loop's own
    pub extra_routes: Option<RouteFile>,
    /// replaces the canonical drying graph
    pub process_override: Option<ProcessDefinition>,
}

/// The assembled closed loop.
pub struct CycleRuntime {
    broker: Arc<Broker>,
    engine: Arc<ProcessEngine>,
    routes: RouteEngine,
    store: Arc<CycleStore>,
    plant: PlantModel,
    config: LoopConfig,
    model_name: String,
    definition_id: String,
    seed: u64,
    plant_state: Arc<Mutex<HashMap<String, CycleInputs>>>,
    pump_stop: Arc<AtomicBool>,
    pump: Option<std::thread::JoinHandle<()>>,
}

impl CycleRuntime {
    /// Build and start the loop around a trained model.
    pub fn start(
        broker: Arc<Broker>,
        store: Arc<CycleStore>,
        model: Arc<dyn DecisionModel>,
        plant: PlantModel,
        config: LoopConfig,
        seed: u64,
    ) -> Result<Self, RunError> {
        Self::start_with(broker, store, model, plant, config, seed, RuntimeOptions::default())
    }

    /// [`start`] with extra routes or a replacement process graph.
    ///
    /// [`start`]: CycleRuntime::start
    pub fn start_with(
        broker: Arc<Broker>,
        store: Arc<CycleStore>,
        model: Arc<dyn DecisionModel>,
        plant: PlantModel,
        config: LoopConfig,
        seed: u64,
        options: RuntimeOptions,
    ) -> Result<Self, RunError> {
        let engine = Arc::new(ProcessEngine::new(Arc::clone(&broker)));
        let definition = options
            .process_override
            .unwrap_or_else(|| grain_drying_definition(&config));
        let definition_id = engine.deploy(definition)?;
        let plant_state: Arc<Mutex<HashMap<String, CycleInputs>>> = Arc::new(Mutex::new(HashMap::new()));
        let model_name = model.model_name().to_string();

        let routes = RouteEngine::new(Arc::clone(&broker));
        register_loop_services(&routes, &store, &plant_state, model, plant, config, seed);
        register_loop_routes(&routes)?;
        if let Some(extra) = options.extra_routes {
            routes.register_route_file(extra)?;
        }
        routes.start()?;

        // completion pump: queue -> engine
        let pump_stop = Arc::new(AtomicBool::new(false));
        let pump = {
            let broker = Arc::clone(&broker);
            let engine = Arc::clone(&engine);
            let stop = Arc::clone(&pump_stop);
            std::thread::spawn(move || {
                while !stop.load(Ordering::SeqCst) {
                    match broker.receive(queues::COMPLETIONS, Duration::from_millis(20)) {
                        Ok(env) => {
                            let (Some(instance), Some(node)) = (
                                env.headers.get(headers::INSTANCE_ID),
                                env.headers.get(headers::NODE_ID),
                            ) else {
                                log::warn!("completion without routing headers dropped");
                                continue;
                            };
                            match engine.handle_completion(instance, node, env.payload.clone()) {
                                Ok(_) => {}
                                Err(crate::process::EngineError::StaleCompletion { .. }) => {}
                                Err(e) => log::error!("completion failed: {e}"),
                            }
                        }
                        Err(crate::bus::BusError::Timeout { .. }) => {}
                        Err(e) => {
                            log::error!("completion pump stopped: {e}");
                            return;
                        }
                    }
                }
            })
        };

        Ok(Self {
            broker,
            engine,
            routes,
            store,
            plant,
            config,
            model_name,
            seed,
            plant_state,
            pump_stop,
            pump: Some(pump),
        })
    }

    pub fn broker(&self) -> Arc<Broker> {
        Arc::clone(&self.broker)
    }

    pub fn store(&self) -> Arc<CycleStore> {
        Arc::clone(&self.store)
    }

    pub fn config(&self) -> LoopConfig {
        self.config
    }

    /// Run `n` fresh cycles; `parallel` bounds how many advance at once
    /// (1 = fully sequential, the deterministic default).
    pub fn run_cycles(&self, n: usize, parallel: usize) -> Result<RunSummary, RunError> {
        let parallel = parallel.max(1);
        let ids: Vec<String> = (0..n).map(|i| format!("cyc-{}-{:04}", self.seed, i + 1)).collect();
        let mut cycles: Vec<CycleRun> = Vec::with_capacity(n);
        for chunk in ids.chunks(parallel) {
            let results: Vec<Result<CycleRun, RunError>> = std::thread::scope(|scope| {
                let handles: Vec<_> = chunk
                    .iter()
                    .map(|cycle_id| scope.spawn(move || self.run_one(cycle_id)))
                    .collect();
                handles
                    .into_iter()
                    .map(|h| h.join().expect("cycle worker panicked"))
                    .collect()
            });
            for result in results {
                cycles.push(result?);
            }
        }
        Ok(RunSummary {
            seed: self.seed,
            model_name: self.model_name.clone(),
            cycles,
        })
    }

    fn run_one(&self, cycle_id: &str) -> Result<CycleRun, RunError> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(self.seed, cycle_id, "inputs"));
        let inputs = self.plant.sample_inputs(&mut rng);
        self.plant_state
            .lock()
            .expect("plant state poisoned")
            .insert(cycle_id.to_string(), inputs);

        let instance_id = self.engine.start_instance(
            "grain-drying",
            json!({ "cycle_id": cycle_id, "retry_count": 0 }),
        )?;

        let started = Instant::now();
        let deadline = Duration::from_secs(30);
        let instance = loop {
            let snapshot = self.engine.instance(&instance_id)?;
            if snapshot.status.is_terminal() {
                break snapshot;
            }
            if started.elapsed() > deadline {
                return Err(RunError::CycleTimeout {
                    cycle_id: cycle_id.to_string(),
                    waited_ms: started.elapsed().as_millis() as u64,
                });
            }
            std::thread::sleep(Duration::from_millis(1));
        };

        // terminal statuses that bypass the boiler still close the record
        match instance.status {
            InstanceStatus::ManualReview => {
                if let Some(mut record) = self.store.get(cycle_id) {
                    if record.status == CycleStatus::Predicted {
                        record.transition(CycleStatus::ManualReview, now_ms())?;
                        self.store.append(record)?;
                    }
                }
            }
            InstanceStatus::Failed => {
                if let Some(mut record) = self.store.get(cycle_id) {
                    if !record.status.is_terminal() {
                        record.transition(CycleStatus::Failed, now_ms())?;
                        self.store.append(record)?;
                    }
                }
            }
            _ => {}
        }

        let var_f64 = |name: &str| instance.variables.get(name).and_then(Value::as_f64);
        Ok(CycleRun {
            cycle_id: cycle_id.to_string(),
            status: instance.status,
            trace: instance.trace.clone(),
            retry_count: var_f64("retry_count").unwrap_or(0.0) as u32,
            predicted_gas: var_f64("predicted_gas"),
            gas_budget: var_f64("gas_budget"),
            predicted_time: var_f64("predicted_time"),
            dispatched_temperature: var_f64("proposed_temperature"),
        })
    }

    /// Stop route workers and the completion pump.
    pub fn shutdown(mut self) {
        self.stop_workers();
    }

    fn stop_workers(&mut self) {
        self.pump_stop.store(true, Ordering::SeqCst);
        if let Some(pump) = self.pump.take() {
            let _ = pump.join();
        }
        self.routes.stop();
    }
}

impl Drop for CycleRuntime {
    fn drop(&mut self) {
        self.stop_workers();
    }
}

fn register_loop_services(
    routes: &RouteEngine,
    store: &Arc<CycleStore>,
    plant_state: &Arc<Mutex<HashMap<String, CycleInputs>>>,
    model: Arc<dyn DecisionModel>,
    plant: PlantModel,
    config: LoopConfig,
    seed: u64,
) {
    let payload_inputs = |payload: &Value| -> Result<CycleInputs, String> {
        Ok(CycleInputs {
            weight: payload["weight"].as_f64().ok_or("weight missing")?,
            input_humidity: payload["input_humidity"].as_f64().ok_or("input_humidity missing")?,
            target_humidity: payload["target_humidity"]
                .as_f64()
                .ok_or("target_humidity missing")?,
        })
    };
    let cycle_of = |payload: &Value| -> Result<String, String> {
        payload["cycle_id"]
            .as_str()
            .map(str::to_string)
            .ok_or_else(|| "cycle_id missing".to_string())
    };

    // humidity sensor
    {
        let plant_state = Arc::clone(plant_state);
        routes.register_service(
            "svc.collect.humidity",
            Arc::new(move |payload: &Value| {
                let cycle_id = cycle_of(payload)?;
                let state = plant_state.lock().expect("plant state poisoned");
                let inputs = state.get(&cycle_id).ok_or("unknown cycle")?;
                Ok(json!({
                    "input_humidity": inputs.input_humidity,
                    "target_humidity": inputs.target_humidity,
                }))
            }),
        );
    }

    // weighbridge
    {
        let plant_state = Arc::clone(plant_state);
        routes.register_service(
            "svc.collect.weight",
            Arc::new(move |payload: &Value| {
                let cycle_id = cycle_of(payload)?;
                let state = plant_state.lock().expect("plant state poisoned");
                let inputs = state.get(&cycle_id).ok_or("unknown cycle")?;
                Ok(json!({ "weight": inputs.weight }))
            }),
        );
    }

    // document store: cycle opens as collected
    {
        let store = Arc::clone(store);
        routes.register_service(
            "svc.persist",
            Arc::new(move |payload: &Value| {
                let cycle_id = cycle_of(payload)?;
                let inputs = payload_inputs(payload)?;
                let record = CycleRecord::new(&cycle_id, inputs, "live", now_ms());
                store.append(record).map_err(|e| e.to_string())?;
                Ok(json!({ "persisted": true }))
            }),
        );
    }

    // decision model plus gas estimate and budget
    {
        let store = Arc::clone(store);
        routes.register_service(
            "svc.predict",
            Arc::new(move |payload: &Value| {
                let cycle_id = cycle_of(payload)?;
                let inputs = payload_inputs(payload)?;
                let proposed_temperature = match payload["proposed_temperature"].as_f64() {
                    Some(t) => t,
                    None => {
                        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &cycle_id, "proposal"));
                        let noise = Normal::new(0.0, config.proposal_temp_sigma)
                            .map_err(|e| e.to_string())?;
                        (plant.optimal_temperature(&inputs) + noise.sample(&mut rng))
                            .clamp(Setpoints::TEMPERATURE_RANGE.0, Setpoints::TEMPERATURE_RANGE.1)
                    }
                };
                let predicted_time = model.predict_time(&inputs.features())?.max(0.05);
                let probe = Setpoints {
                    temperature: proposed_temperature,
                    extraction_time: predicted_time,
                    humidity_level: inputs.input_humidity,
                    humidity_goal: inputs.target_humidity,
                };
                let predicted_gas = plant.ground_truth_outcome(&inputs, &probe).gas_consumed;
                let gas_budget = plant.gas_budget(&inputs, config.gas_budget_factor);
                let retry_count = payload["retry_count"].as_f64().unwrap_or(0.0) as u32;

                let mut record = store.get(&cycle_id).ok_or("cycle not persisted yet")?;
                record.prediction = Some(Prediction {
                    extraction_time: predicted_time,
                    temperature: proposed_temperature,
                    gas: predicted_gas,
                    model_name: model.model_name().to_string(),
                    retry_count,
                });
                record
                    .transition(CycleStatus::Predicted, now_ms())
                    .map_err(|e| e.to_string())?;
                store.append(record).map_err(|e| e.to_string())?;

                Ok(json!({
                    "predicted_time": predicted_time,
                    "proposed_temperature": proposed_temperature,
                    "predicted_gas": predicted_gas,
                    "gas_budget": gas_budget,
                    "model_name": model.model_name(),
                }))
            }),
        );
    }

    // setpoint dispatch: record moves to dispatched before the boiler runs
    {
        let store = Arc::clone(store);
        routes.register_service(
            "svc.dispatch",
            Arc::new(move |payload: &Value| {
                let cycle_id = cycle_of(payload)?;
                let inputs = payload_inputs(payload)?;
                let mut record = store.get(&cycle_id).ok_or("cycle not persisted yet")?;
                record.setpoints = Some(Setpoints {
                    temperature: payload["proposed_temperature"].as_f64().ok_or("no temperature")?,
                    extraction_time: payload["predicted_time"].as_f64().ok_or("no time")?,
                    humidity_level: inputs.input_humidity,
                    humidity_goal: inputs.target_humidity,
                });
                record
                    .transition(CycleStatus::Dispatched, now_ms())
                    .map_err(|e| e.to_string())?;
                store.append(record).map_err(|e| e.to_string())?;
                Ok(json!({ "dispatched": true }))
            }),
        );
    }

    // the boiler: runs the plant and closes the record
    {
        let store = Arc::clone(store);
        let plant_state = Arc::clone(plant_state);
        routes.register_service(
            "svc.boiler",
            Arc::new(move |payload: &Value| {
                let cycle_id = cycle_of(payload)?;
                let true_inputs = {
                    let state = plant_state.lock().expect("plant state poisoned");
                    *state.get(&cycle_id).ok_or("unknown cycle")?
                };
                let setpoints = Setpoints {
                    temperature: payload["proposed_temperature"].as_f64().ok_or("no temperature")?,
                    extraction_time: payload["predicted_time"].as_f64().ok_or("no time")?,
                    humidity_level: true_inputs.input_humidity,
                    humidity_goal: true_inputs.target_humidity,
                };
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &cycle_id, "boiler"));
                let outcome = plant.simulate(&true_inputs, &setpoints, &mut rng);

                let mut record = store.get(&cycle_id).ok_or("cycle not dispatched yet")?;
                record.outcome = Some(outcome);
                record
                    .transition(CycleStatus::Completed, now_ms())
                    .map_err(|e| e.to_string())?;
                store.append(record).map_err(|e| e.to_string())?;

                Ok(json!({
                    "outcome_time": outcome.extraction_time,
                    "outcome_gas": outcome.gas_consumed,
                    "outcome_humidity": outcome.achieved_humidity,
                }))
            }),
        );
    }
}

fn register_loop_routes(routes: &RouteEngine) -> Result<(), crate::routes::RouteError> {
    let completion = |name: &str, topic: &str, service: &str| RouteDefinition {
        name: name.into(),
        from: Endpoint::topic(topic),
        steps: vec![ProcessorStep::Enrich { service: service.into() }],
        to: Some(Endpoint::queue(queues::COMPLETIONS)),
    };
    routes.register_route(completion(
        "collect-humidity",
        topics::COLLECT_HUMIDITY,
        "svc.collect.humidity",
    ))?;
    routes.register_route(completion(
        "collect-weight",
        topics::COLLECT_WEIGHT,
        "svc.collect.weight",
    ))?;
    routes.register_route(completion("persist", topics::PERSIST, "svc.persist"))?;
    routes.register_route(completion("predict", topics::PREDICT, "svc.predict"))?;
    // dispatch forwards the setpoints to the boiler queue...
    routes.register_route(RouteDefinition {
        name: "dispatch".into(),
        from: Endpoint::topic(topics::DISPATCH),
        steps: vec![ProcessorStep::Enrich { service: "svc.dispatch".into() }],
        to: Some(Endpoint::queue(queues::BOILER_SETPOINTS)),
    })?;
    // ...and the boiler's measured outcome completes the dispatch node
    routes.register_route(RouteDefinition {
        name: "boiler".into(),
        from: Endpoint::queue(queues::BOILER_SETPOINTS),
        steps: vec![ProcessorStep::Enrich { service: "svc.boiler".into() }],
        to: Some(Endpoint::queue(queues::COMPLETIONS)),
    })?;
    Ok(())
}

/// Model accuracy over fresh cycles against the noise-free oracle: the
/// extraction time at the optimal temperature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    pub mae: f64,
    pub mean_truth: f64,
    pub relative_mae: f64,
    pub cycles: usize,
}

pub fn fresh_cycle_accuracy(
    model: &dyn DecisionModel,
    plant: &PlantModel,
    n: usize,
    seed: u64,
) -> Result<AccuracyReport, RunError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut abs_err = 0.0;
    let mut truth_sum = 0.0;
    for _ in 0..n {
        let inputs = plant.sample_inputs(&mut rng);
        let truth = plant.optimal_extraction_time(&inputs);
        let predicted = model.predict_time(&inputs.features()).map_err(RunError::Model)?;
        abs_err += (predicted - truth).abs();
        truth_sum += truth;
    }
    let mae = abs_err / n as f64;
    let mean_truth = truth_sum / n as f64;
    Ok(AccuracyReport { mae, mean_truth, relative_mae: mae / mean_truth, cycles: n })
}

/// Deterministically re-execute persisted cycles: recompute each completed
/// record's outcome from its stored setpoints and the per-cycle seed, and
/// compare bit-for-bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayReport {
    pub replayed: usize,
    pub matching: usize,
    pub mismatched: Vec<String>,
}

pub fn replay(
    store: &CycleStore,
    plant: &PlantModel,
    plant_inputs_seed: u64,
) -> Result<ReplayReport, RunError> {
    let mut report = ReplayReport { replayed: 0, matching: 0, mismatched: Vec::new() };
    for record in store.query(&crate::store::RecordFilter::status(CycleStatus::Completed)) {
        let (Some(setpoints), Some(stored)) = (record.setpoints, record.outcome) else {
            continue;
        };
        if record.source != "live" {
            continue;
        }
        report.replayed += 1;
        let mut rng =
            ChaCha8Rng::seed_from_u64(derive_seed(plant_inputs_seed, &record.cycle_id, "boiler"));
        let recomputed = plant.simulate(&record.inputs, &setpoints, &mut rng);
        if recomputed == stored {
            report.matching += 1;
        } else {
            report.mismatched.push(record.cycle_id.clone());
        }
    }
    Ok(report)
}

/// Trace conformance: replays a node-visit sequence against the drying
/// graph. Used by tests and the report command.
pub fn is_legal_trace(trace: &[String], status: InstanceStatus, max_retries: u32) -> bool {
    let mut i = 0;
    let expect = |want: &str, at: &mut usize| -> bool {
        let ok = trace.get(*at).map(String::as_str) == Some(want);
        *at += 1;
        ok
    };
    if !expect("start", &mut i) || !expect("fan_out", &mut i) {
        return false;
    }
    // the two collections appear in either order
    let c1 = trace.get(i).map(String::as_str);
    let c2 = trace.get(i + 1).map(String::as_str);
    let collections_ok = matches!(
        (c1, c2),
        (Some("collect_humidity"), Some("collect_weight"))
            | (Some("collect_weight"), Some("collect_humidity"))
    );
    if !collections_ok {
        return false;
    }
    i += 2;
    if !expect("join_inputs", &mut i) || !expect("persist_inputs", &mut i) {
        return false;
    }
    // one predict+gate round per attempt, bounded by max_retries
    let mut rounds = 0;
    loop {
        if !expect("predict_setpoints", &mut i) || !expect("gas_gate", &mut i) {
            return false;
        }
        rounds += 1;
        match trace.get(i).map(String::as_str) {
            Some("predict_setpoints") => {
                if rounds > max_retries as usize {
                    return false;
                }
                continue;
            }
            Some("dispatch_setpoints") => {
                i += 1;
                return status == InstanceStatus::Completed
                    && trace.get(i).map(String::as_str) == Some("done")
                    && trace.len() == i + 1;
            }
            Some("manual_review") => {
                i += 1;
                return status == InstanceStatus::ManualReview && trace.len() == i;
            }
            _ => return false,
        }
    }
}
