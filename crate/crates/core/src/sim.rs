//! Seeded grain-dryer/boiler simulator.
//!
//! Stands in for the plant: generates historical drying cycles, answers
//! setpoint dispatches with measured outcomes, and provides the noise-free
//! ground truth used for gas budgets and closed-loop accuracy checks.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::cycle::{CycleInputs, CycleRecord, CycleStatus, DatasetRow, Setpoints, SimOutcome};

/// Plant constants. The defaults are fixed so derived values stay stable;
/// tests pin them.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantModel {
    /// drying rate, t·pct / (h·°C)
    pub k_dry: f64,
    /// ambient temperature, °C
    pub t_ambient: f64,
    /// gas per tonne and humidity point, m³ / (t·pct)
    pub c_gas: f64,
    /// quadratic off-optimum gas penalty, 1/°C²
    pub alpha: f64,
    /// relative measurement noise (std dev)
    pub noise_sigma: f64,
    /// std dev of expert temperature choice around the optimum, °C
    pub expert_temp_sigma: f64,
}

impl Default for PlantModel {
    fn default() -> Self {
        Self {
            k_dry: 1.25,
            t_ambient: 15.0,
            c_gas: 1.1,
            alpha: 0.0004,
            noise_sigma: 0.02,
            expert_temp_sigma: 3.0,
        }
    }
}

impl PlantModel {
    /// Temperature minimizing gas use for the given inputs, °C.
    pub fn optimal_temperature(&self, inputs: &CycleInputs) -> f64 {
        75.0 + 0.5 * inputs.delta_humidity() + 0.05 * inputs.weight
    }

    /// Noise-free closed-form outcome.
    ///
    /// Drying to target takes `weight·Δh / (k_dry·(T − T_ambient))` hours and
    /// consumes `c_gas·weight·Δh·(1 + α·(T − T_opt)²)` m³ of gas. When the
    /// commanded extraction time is shorter than the required time, the
    /// achieved humidity interpolates linearly between input and target.
    pub fn ground_truth_outcome(&self, inputs: &CycleInputs, setpoints: &Setpoints) -> SimOutcome {
        let dh = inputs.delta_humidity();
        if dh <= 0.0 {
            return SimOutcome {
                extraction_time: 0.0,
                gas_consumed: 0.0,
                achieved_humidity: inputs.input_humidity,
            };
        }
        let needed = inputs.weight * dh / (self.k_dry * (setpoints.temperature - self.t_ambient));
        let off = setpoints.temperature - self.optimal_temperature(inputs);
        let gas = self.c_gas * inputs.weight * dh * (1.0 + self.alpha * off * off);
        let achieved = if setpoints.extraction_time >= needed {
            inputs.target_humidity
        } else {
            inputs.input_humidity - dh * (setpoints.extraction_time / needed)
        };
        SimOutcome {
            extraction_time: needed,
            gas_consumed: gas,
            achieved_humidity: achieved,
        }
    }

    /// Noise-free gas at the optimal temperature (penalty factor 1).
    pub fn optimal_gas(&self, inputs: &CycleInputs) -> f64 {
        self.c_gas * inputs.weight * inputs.delta_humidity().max(0.0)
    }

    /// Noise-free extraction time when operating at the optimal temperature.
    pub fn optimal_extraction_time(&self, inputs: &CycleInputs) -> f64 {
        let dh = inputs.delta_humidity();
        if dh <= 0.0 {
            return 0.0;
        }
        inputs.weight * dh / (self.k_dry * (self.optimal_temperature(inputs) - self.t_ambient))
    }

    /// Maximum acceptable predicted gas: `factor` × the oracle optimum.
    pub fn gas_budget(&self, inputs: &CycleInputs, factor: f64) -> f64 {
        factor * self.optimal_gas(inputs)
    }

    /// Ground truth with per-field relative Gaussian noise, clamped to the
    /// physical ranges.
    pub fn simulate(&self, inputs: &CycleInputs, setpoints: &Setpoints, rng: &mut impl Rng) -> SimOutcome {
        let truth = self.ground_truth_outcome(inputs, setpoints);
        if self.noise_sigma == 0.0 {
            return truth;
        }
        let noise = Normal::new(0.0, self.noise_sigma).expect("sigma validated");
        let jitter = |v: f64, rng: &mut dyn rand::RngCore| (v * (1.0 + noise.sample(rng))).max(0.0);
        SimOutcome {
            extraction_time: jitter(truth.extraction_time, rng),
            gas_consumed: jitter(truth.gas_consumed, rng),
            achieved_humidity: jitter(truth.achieved_humidity, rng).min(inputs.input_humidity),
        }
    }

    /// Draw valid cycle inputs uniformly over their ranges.
    pub fn sample_inputs(&self, rng: &mut impl Rng) -> CycleInputs {
        let weight = rng.random_range(CycleInputs::WEIGHT_RANGE.0..=CycleInputs::WEIGHT_RANGE.1);
        let input_humidity =
            rng.random_range(CycleInputs::INPUT_HUMIDITY_RANGE.0..=CycleInputs::INPUT_HUMIDITY_RANGE.1);
        // keep the target strictly below the measured input
        let hi = (input_humidity - 0.5).min(CycleInputs::TARGET_HUMIDITY_RANGE.1);
        let target_humidity = rng.random_range(CycleInputs::TARGET_HUMIDITY_RANGE.0..=hi);
        CycleInputs { weight, input_humidity, target_humidity }
    }
}

/// Deterministic historical-cycle generator: expert-chosen temperatures near
/// the optimum, measured outcomes from the noisy simulator.
pub fn gen_historical(n: usize, seed: u64, plant: &PlantModel) -> Vec<CycleRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(n);
    for i in 0..n {
        let inputs = plant.sample_inputs(&mut rng);
        let expert_noise = Normal::new(0.0, plant.expert_temp_sigma).expect("sigma > 0");
        let temperature = (plant.optimal_temperature(&inputs) + expert_noise.sample(&mut rng))
            .clamp(Setpoints::TEMPERATURE_RANGE.0, Setpoints::TEMPERATURE_RANGE.1);
        // run long enough to reach target; the measured time comes back
        let probe = Setpoints {
            temperature,
            extraction_time: f64::INFINITY,
            humidity_level: inputs.input_humidity,
            humidity_goal: inputs.target_humidity,
        };
        let outcome = plant.simulate(&inputs, &probe, &mut rng);
        let setpoints = Setpoints {
            temperature,
            extraction_time: outcome.extraction_time,
            humidity_level: inputs.input_humidity,
            humidity_goal: inputs.target_humidity,
        };
        let ts = 1_000 * (i as u64 + 1);
        let mut record = CycleRecord::new(format!("hist-{:04}", i + 1), inputs, "historical", ts);
        record.setpoints = Some(setpoints);
        record.outcome = Some(outcome);
        record.status = CycleStatus::Completed;
        record.timestamps.insert(CycleStatus::Completed.to_string(), ts);
        records.push(record);
    }
    records
}

/// Serialize records to the shared dataset format: one row per line.
pub fn to_dataset_lines(records: &[CycleRecord]) -> String {
    let mut out = String::new();
    for r in records {
        if let Some(row) = DatasetRow::from_record(r) {
            out.push_str(&serde_json::to_string(&row).expect("row serializes"));
            out.push('\n');
        }
    }
    out
}
