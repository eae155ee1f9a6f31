//! Drying-cycle domain records shared by the simulator, the store, and the
//! workflow runtime.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CycleError {
    #[error("{field} = {value} outside [{min}, {max}]")]
    OutOfRange {
        field: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("target humidity {target} must be below input humidity {input}")]
    TargetNotBelowInput { target: f64, input: f64 },
    #[error("illegal status transition {from} -> {to} for cycle {cycle_id}")]
    IllegalTransition {
        cycle_id: String,
        from: CycleStatus,
        to: CycleStatus,
    },
    #[error("cycle {cycle_id} in status {status} is missing {what}")]
    MissingField {
        cycle_id: String,
        status: CycleStatus,
        what: &'static str,
    },
}

/// Measured cycle inputs: batch weight and the humidity pair.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CycleInputs {
    /// tonnes, 20..=120
    pub weight: f64,
    /// percent, 14..=35
    pub input_humidity: f64,
    /// percent, 11..=15, strictly below `input_humidity`
    pub target_humidity: f64,
}

impl CycleInputs {
    pub const WEIGHT_RANGE: (f64, f64) = (20.0, 120.0);
    pub const INPUT_HUMIDITY_RANGE: (f64, f64) = (14.0, 35.0);
    pub const TARGET_HUMIDITY_RANGE: (f64, f64) = (11.0, 15.0);

    pub fn validate(&self) -> Result<(), CycleError> {
        check_range("weight", self.weight, Self::WEIGHT_RANGE)?;
        check_range("input_humidity", self.input_humidity, Self::INPUT_HUMIDITY_RANGE)?;
        check_range("target_humidity", self.target_humidity, Self::TARGET_HUMIDITY_RANGE)?;
        if self.target_humidity >= self.input_humidity {
            return Err(CycleError::TargetNotBelowInput {
                target: self.target_humidity,
                input: self.input_humidity,
            });
        }
        Ok(())
    }

    /// Humidity delta to remove, in points.
    pub fn delta_humidity(&self) -> f64 {
        self.input_humidity - self.target_humidity
    }

    /// Model feature vector: desired output humidity, detected input
    /// humidity, extraction weight.
    pub fn features(&self) -> [f64; 3] {
        [self.target_humidity, self.input_humidity, self.weight]
    }
}

/// Commanded dryer operating values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Setpoints {
    /// degrees C, 60..=120
    pub temperature: f64,
    /// hours, > 0
    pub extraction_time: f64,
    /// echo of the detected input humidity, percent
    pub humidity_level: f64,
    /// echo of the desired output humidity, percent
    pub humidity_goal: f64,
}

impl Setpoints {
    pub const TEMPERATURE_RANGE: (f64, f64) = (60.0, 120.0);

    pub fn validate(&self) -> Result<(), CycleError> {
        check_range("temperature", self.temperature, Self::TEMPERATURE_RANGE)?;
        if self.extraction_time <= 0.0 {
            return Err(CycleError::OutOfRange {
                field: "extraction_time",
                value: self.extraction_time,
                min: f64::MIN_POSITIVE,
                max: f64::INFINITY,
            });
        }
        Ok(())
    }
}

/// Measured (or simulated) outcome of one drying cycle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimOutcome {
    /// hours
    pub extraction_time: f64,
    /// cubic metres
    pub gas_consumed: f64,
    /// percent
    pub achieved_humidity: f64,
}

/// What the decision model proposed for a cycle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub extraction_time: f64,
    pub temperature: f64,
    pub gas: f64,
    pub model_name: String,
    pub retry_count: u32,
}

/// Lifecycle of a cycle record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CycleStatus {
    Collected,
    Predicted,
    Dispatched,
    Completed,
    ManualReview,
    Failed,
}

impl CycleStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, Self::Completed | Self::ManualReview | Self::Failed)
    }

    /// Legal forward transitions. Updating a non-terminal record without a
    /// status change is always allowed.
    pub fn can_transition_to(self, next: CycleStatus) -> bool {
        use CycleStatus::*;
        if self == next {
            return !self.is_terminal();
        }
        matches!(
            (self, next),
            (Collected, Predicted)
                | (Predicted, Dispatched)
                | (Predicted, ManualReview)
                | (Predicted, Failed)
                | (Dispatched, Completed)
                | (Dispatched, Failed)
        )
    }
}

impl fmt::Display for CycleStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Self::Collected => "collected",
            Self::Predicted => "predicted",
            Self::Dispatched => "dispatched",
            Self::Completed => "completed",
            Self::ManualReview => "manual-review",
            Self::Failed => "failed",
        };
        f.write_str(s)
    }
}

/// One drying cycle as persisted: inputs, what was decided, what happened.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleRecord {
    pub cycle_id: String,
    pub inputs: CycleInputs,
    pub setpoints: Option<Setpoints>,
    pub prediction: Option<Prediction>,
    pub outcome: Option<SimOutcome>,
    pub status: CycleStatus,
    pub source: String,
    /// status name -> ms since epoch of the transition into it
    pub timestamps: BTreeMap<String, u64>,
}

impl CycleRecord {
    pub fn new(cycle_id: impl Into<String>, inputs: CycleInputs, source: impl Into<String>, now_ms: u64) -> Self {
        let mut timestamps = BTreeMap::new();
        timestamps.insert(CycleStatus::Collected.to_string(), now_ms);
        Self {
            cycle_id: cycle_id.into(),
            inputs,
            setpoints: None,
            prediction: None,
            outcome: None,
            status: CycleStatus::Collected,
            source: source.into(),
            timestamps,
        }
    }

    /// First recorded timestamp, used for store ordering.
    pub fn first_timestamp(&self) -> u64 {
        self.timestamps.values().copied().min().unwrap_or(0)
    }

    /// Move to `next`, stamping the transition time.
    pub fn transition(&mut self, next: CycleStatus, now_ms: u64) -> Result<(), CycleError> {
        if !self.status.can_transition_to(next) {
            return Err(CycleError::IllegalTransition {
                cycle_id: self.cycle_id.clone(),
                from: self.status,
                to: next,
            });
        }
        self.status = next;
        self.timestamps.entry(next.to_string()).or_insert(now_ms);
        Ok(())
    }

    /// Per-status payload requirements.
    pub fn validate(&self) -> Result<(), CycleError> {
        self.inputs.validate()?;
        if self.status == CycleStatus::Predicted && self.prediction.is_none() {
            return Err(CycleError::MissingField {
                cycle_id: self.cycle_id.clone(),
                status: self.status,
                what: "prediction",
            });
        }
        if self.status == CycleStatus::Completed && self.outcome.is_none() {
            return Err(CycleError::MissingField {
                cycle_id: self.cycle_id.clone(),
                status: self.status,
                what: "outcome",
            });
        }
        Ok(())
    }
}

/// Flat dataset row: the shared on-disk schema for training data.
///
/// Field order is fixed: cycle_id, weight, input_humidity, target_humidity,
/// temperature, extraction_time, gas_consumed, achieved_humidity, source.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetRow {
    pub cycle_id: String,
    pub weight: f64,
    pub input_humidity: f64,
    pub target_humidity: f64,
    pub temperature: f64,
    pub extraction_time: f64,
    pub gas_consumed: f64,
    pub achieved_humidity: f64,
    pub source: String,
}

impl DatasetRow {
    pub fn from_record(r: &CycleRecord) -> Option<Self> {
        let setpoints = r.setpoints?;
        let outcome = r.outcome?;
        Some(Self {
            cycle_id: r.cycle_id.clone(),
            weight: r.inputs.weight,
            input_humidity: r.inputs.input_humidity,
            target_humidity: r.inputs.target_humidity,
            temperature: setpoints.temperature,
            extraction_time: outcome.extraction_time,
            gas_consumed: outcome.gas_consumed,
            achieved_humidity: outcome.achieved_humidity,
            source: r.source.clone(),
        })
    }

    /// Rebuild a completed record from a dataset row.
    pub fn into_record(self, now_ms: u64) -> CycleRecord {
        let inputs = CycleInputs {
            weight: self.weight,
            input_humidity: self.input_humidity,
            target_humidity: self.target_humidity,
        };
        let mut timestamps = BTreeMap::new();
        timestamps.insert(CycleStatus::Completed.to_string(), now_ms);
        CycleRecord {
            cycle_id: self.cycle_id,
            inputs,
            setpoints: Some(Setpoints {
                temperature: self.temperature,
                extraction_time: self.extraction_time,
                humidity_level: self.input_humidity,
                humidity_goal: self.target_humidity,
            }),
            prediction: None,
            outcome: Some(SimOutcome {
                extraction_time: self.extraction_time,
                gas_consumed: self.gas_consumed,
                achieved_humidity: self.achieved_humidity,
            }),
            status: CycleStatus::Completed,
            source: self.source,
            timestamps,
        }
    }
}

fn check_range(field: &'static str, value: f64, (min, max): (f64, f64)) -> Result<(), CycleError> {
    if !(min..=max).contains(&value) || !value.is_finite() {
        return Err(CycleError::OutOfRange { field, value, min, max });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn inputs() -> CycleInputs {
        CycleInputs { weight: 60.0, input_humidity: 25.0, target_humidity: 13.0 }
    }

    #[test]
    fn inputs_validate_ranges() {
        assert!(inputs().validate().is_ok());
        let mut bad = inputs();
        bad.weight = 10.0;
        assert!(matches!(bad.validate(), Err(CycleError::OutOfRange { field: "weight", .. })));
        let mut eq = inputs();
        eq.target_humidity = 14.0;
        eq.input_humidity = 14.0;
        assert!(matches!(eq.validate(), Err(CycleError::TargetNotBelowInput { .. })));
    }

    #[test]
    fn status_transition_grammar() {
        use CycleStatus::*;
        assert!(Collected.can_transition_to(Predicted));
        assert!(Predicted.can_transition_to(Dispatched));
        assert!(Predicted.can_transition_to(ManualReview));
        assert!(Dispatched.can_transition_to(Completed));
        assert!(Predicted.can_transition_to(Predicted));
        assert!(!Completed.can_transition_to(Predicted));
        assert!(!Completed.can_transition_to(Completed));
        assert!(!Collected.can_transition_to(Dispatched));
    }

    #[test]
    fn record_transition_stamps_time() {
        let mut r = CycleRecord::new("c1", inputs(), "live", 1000);
        r.prediction = Some(Prediction {
            extraction_time: 7.0,
            temperature: 90.0,
            gas: 800.0,
            model_name: "anfis".into(),
            retry_count: 0,
        });
        r.transition(CycleStatus::Predicted, 2000).unwrap();
        assert_eq!(r.timestamps["predicted"], 2000);
        assert_eq!(r.first_timestamp(), 1000);
        let err = r.transition(CycleStatus::Collected, 3000);
        assert!(matches!(err, Err(CycleError::IllegalTransition { .. })));
    }

    #[test]
    fn dataset_row_round_trips_record_fields() {
        let mut r = CycleRecord::new("c9", inputs(), "historical", 5);
        r.setpoints = Some(Setpoints {
            temperature: 95.0,
            extraction_time: 7.2,
            humidity_level: 25.0,
            humidity_goal: 13.0,
        });
        r.outcome = Some(SimOutcome {
            extraction_time: 7.2,
            gas_consumed: 830.0,
            achieved_humidity: 13.0,
        });
        r.status = CycleStatus::Completed;
        let row = DatasetRow::from_record(&r).unwrap();
        let back = row.clone().into_record(5);
        assert_eq!(DatasetRow::from_record(&back).unwrap(), row);
    }
}
