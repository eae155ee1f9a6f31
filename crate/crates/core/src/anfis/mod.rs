//! Adaptive neuro-fuzzy inference system: first-order Takagi-Sugeno rules
//! with Gaussian antecedents.
//!
//! Rules are derived automatically from data (k-means scatter partition)
//! and may be extended with expert rules whose antecedents stay frozen
//! during training. Training minimizes mean Huber loss with full-batch
//! Adam over every non-frozen parameter.
//!
//! Evaluation of one input runs the usual five layers: Gaussian membership
//! per input, product firing strength per rule, normalization across rules,
//! affine consequents, weighted sum. Firing strengths are computed in log
//! space so narrow rules cannot underflow the product.

mod kmeans;
mod train;

pub use train::{train, EpochLoss, TrainOutcome, TrainRun, TrainingConfig};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::RegressionDataset;
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum AnfisError {
    #[error("dataset has {got} samples but {need} rules were requested")]
    TooFewSamples { got: usize, need: usize },
    #[error("feature {index} is degenerate (min = max = {value})")]
    DegenerateFeature { index: usize, value: f64 },
    #[error("rule has dimension {got}, model expects {expected}")]
    RuleDimension { got: usize, expected: usize },
    #[error("input has dimension {got}, model expects {expected}")]
    InputDimension { got: usize, expected: usize },
    #[error("non-finite input value")]
    NonFiniteInput,
    #[error("width must be strictly positive, got {0}")]
    NonPositiveWidth(f64),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("model file error: {0}")]
    File(String),
}

/// Lower bound on Gaussian widths; keeps memberships non-singular.
pub const WIDTH_FLOOR: f64 = 0.05;

/// Where a rule came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleOrigin {
    Auto,
    Expert,
}

/// One Takagi-Sugeno rule: Gaussian antecedent per input plus an affine
/// consequent. All values are in normalized units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule<T> {
    pub centers: Vec<T>,
    pub widths: Vec<T>,
    pub coefficients: Vec<T>,
    pub bias: T,
    pub origin: RuleOrigin,
    pub antecedent_frozen: bool,
}

impl<T: Scalar> Rule<T> {
    /// Expert rule constructor: antecedents frozen, origin tagged.
    pub fn expert(centers: Vec<T>, widths: Vec<T>, coefficients: Vec<T>, bias: T) -> Self {
        Self {
            centers,
            widths,
            coefficients,
            bias,
            origin: RuleOrigin::Expert,
            antecedent_frozen: true,
        }
    }

    /// Affine consequent value at `x`.
    pub fn consequent(&self, x: &[T]) -> T {
        let mut acc = self.bias;
        for (a, v) in self.coefficients.iter().zip(x) {
            acc = acc + *a * *v;
        }
        acc
    }

    /// Log firing strength: sum of per-dimension log Gaussian memberships.
    fn log_firing(&self, x: &[T]) -> T {
        let half = T::of(0.5);
        let mut acc = T::zero();
        for ((&c, &s), &v) in self.centers.iter().zip(&self.widths).zip(x) {
            let d = v - c;
            acc = acc - half * d * d / (s * s);
        }
        acc
    }

    fn check_dims(&self, dim: usize) -> Result<(), AnfisError> {
        if self.centers.len() != dim || self.widths.len() != dim || self.coefficients.len() != dim {
            return Err(AnfisError::RuleDimension {
                got: self.centers.len(),
                expected: dim,
            });
        }
        if let Some(w) = self.widths.iter().find(|w| **w <= T::zero()) {
            return Err(AnfisError::NonPositiveWidth(w.to_f64().unwrap_or(f64::NAN)));
        }
        Ok(())
    }
}

pub use crate::dataset::Normalization;

/// The trained rule bank plus normalization stats.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnfisModel<T> {
    pub rules: Vec<Rule<T>>,
    pub input_dim: usize,
    pub normalization: Normalization<T>,
    pub target_name: String,
}

/// A denormalized prediction plus its domain flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelOutput<T> {
    pub value: T,
    pub out_of_domain: bool,
}

/// One row of an explanation: how much a rule contributed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplainEntry<T> {
    pub rule_index: usize,
    pub origin: RuleOrigin,
    /// normalized firing strength, sums to 1 across entries
    pub strength: T,
    /// consequent value in normalized target units
    pub consequent: T,
}

impl<T: Scalar> AnfisModel<T> {
    /// Derive a model from data: normalization stats from the dataset,
    /// `n_rules` auto rules via k-means on normalized inputs (widths are the
    /// per-dimension RMS member distance, floored), zero consequents, then
    /// any expert rules with frozen antecedents.
    pub fn init_from_data(
        dataset: &RegressionDataset<T>,
        n_rules: usize,
        expert_rules: Vec<Rule<T>>,
        seed: u64,
    ) -> Result<Self, AnfisError> {
        if dataset.len() < n_rules {
            return Err(AnfisError::TooFewSamples { got: dataset.len(), need: n_rules });
        }
        let normalization = Normalization::from_dataset(dataset);
        if let Some(index) = normalization.degenerate_feature() {
            return Err(AnfisError::DegenerateFeature {
                index,
                value: normalization.features[index].0.to_f64().unwrap_or(f64::NAN),
            });
        }
        let dim = dataset.dim();
        let normalized: Vec<Vec<T>> = dataset
            .inputs
            .iter()
            .map(|x| normalization.normalize_input(x))
            .collect();

        let clustering = kmeans::cluster(&normalized, n_rules, seed);
        let floor = T::of(WIDTH_FLOOR);
        let mut rules: Vec<Rule<T>> = clustering
            .into_iter()
            .map(|c| Rule {
                centers: c.center,
                widths: c.rms_widths.into_iter().map(|w| w.max(floor)).collect(),
                coefficients: vec![T::zero(); dim],
                bias: T::zero(),
                origin: RuleOrigin::Auto,
                antecedent_frozen: false,
            })
            .collect();

        for mut rule in expert_rules {
            rule.check_dims(dim)?;
            rule.origin = RuleOrigin::Expert;
            rule.antecedent_frozen = true;
            rules.push(rule);
        }
        Ok(Self {
            rules,
            input_dim: dim,
            normalization,
            target_name: dataset.target_name.clone(),
        })
    }

    /// Five-layer evaluation on a normalized input: returns the normalized
    /// prediction and the normalized firing strengths (they sum to 1).
    pub fn forward(&self, x: &[T]) -> Result<(T, Vec<T>), AnfisError> {
        if x.len() != self.input_dim {
            return Err(AnfisError::InputDimension { got: x.len(), expected: self.input_dim });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(AnfisError::NonFiniteInput);
        }
        let log_w: Vec<T> = self.rules.iter().map(|r| r.log_firing(x)).collect();
        let max = log_w.iter().copied().fold(T::neg_infinity(), T::max);
        let mut firing: Vec<T> = log_w.into_iter().map(|lw| (lw - max).exp()).collect();
        let total: T = firing.iter().copied().sum();
        let mut y = T::zero();
        for (w, rule) in firing.iter_mut().zip(&self.rules) {
            *w = *w / total;
            y = y + *w * rule.consequent(x);
        }
        Ok((y, firing))
    }

    /// Normalize, evaluate, denormalize. Inputs far outside the training
    /// ranges still predict but carry the out-of-domain flag.
    pub fn predict(&self, raw: &[T]) -> Result<ModelOutput<T>, AnfisError> {
        let x = self.normalization.normalize_input(raw);
        let (y, _) = self.forward(&x)?;
        Ok(ModelOutput {
            value: self.normalization.denormalize_target(y),
            out_of_domain: self.normalization.out_of_domain(raw),
        })
    }

    /// Rule contributions for one raw input, strongest first. The normalized
    /// prediction equals the strength-weighted sum of the consequents.
    pub fn explain(&self, raw: &[T]) -> Result<Vec<ExplainEntry<T>>, AnfisError> {
        let x = self.normalization.normalize_input(raw);
        let (_, firing) = self.forward(&x)?;
        let mut entries: Vec<ExplainEntry<T>> = firing
            .into_iter()
            .enumerate()
            .map(|(i, strength)| ExplainEntry {
                rule_index: i,
                origin: self.rules[i].origin,
                strength,
                consequent: self.rules[i].consequent(&x),
            })
            .collect();
        entries.sort_by(|a, b| b.strength.partial_cmp(&a.strength).unwrap_or(std::cmp::Ordering::Equal));
        Ok(entries)
    }

    fn trainable_dims(&self) -> usize {
        self.rules
            .iter()
            .map(|r| {
                let consequent = self.input_dim + 1;
                if r.antecedent_frozen {
                    consequent
                } else {
                    consequent + 2 * self.input_dim
                }
            })
            .sum()
    }
}

/// On-disk model document: rules and stats plus an echo of how it was
/// trained.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnfisArtifact<T> {
    pub model: AnfisModel<T>,
    pub config: TrainingConfig<T>,
    pub summary: TrainingSummary<T>,
}

/// Condensed training history for the model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary<T> {
    pub epochs_run: usize,
    pub final_train_loss: T,
    pub final_validation_loss: T,
    pub aborted_at: Option<usize>,
}

impl<T: Scalar> AnfisArtifact<T> {
    pub fn save(&self, path: &std::path::Path) -> Result<(), AnfisError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| AnfisError::File(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| AnfisError::File(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self, AnfisError> {
        let text = std::fs::read_to_string(path).map_err(|e| AnfisError::File(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| AnfisError::File(e.to_string()))
    }
}
