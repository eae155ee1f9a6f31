//! Full-batch gradient training for the rule bank: mean Huber loss, Adam
//! updates, frozen antecedents respected.

use serde::{Deserialize, Serialize};

use super::{AnfisError, AnfisModel, TrainingSummary, WIDTH_FLOOR};
use crate::dataset::RegressionDataset;
use crate::metrics::{adam_step, huber, huber_grad, AdamParams, AdamState};
use crate::scalar::Scalar;

/// Knobs for one training run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainingConfig<T> {
    pub epochs: usize,
    pub learning_rate: T,
    pub huber_delta: T,
    pub train_fraction: f64,
    pub seed: u64,
    pub beta1: T,
    pub beta2: T,
    pub epsilon: T,
}

impl<T: Scalar> Default for TrainingConfig<T> {
    fn default() -> Self {
        Self {
            epochs: 5000,
            learning_rate: T::of(0.01),
            huber_delta: T::one(),
            train_fraction: 0.70,
            seed: 0,
            beta1: T::of(0.9),
            beta2: T::of(0.999),
            epsilon: T::of(1e-8),
        }
    }
}

impl<T: Scalar> TrainingConfig<T> {
    pub fn validate(&self) -> Result<(), AnfisError> {
        if self.epochs < 1 {
            return Err(AnfisError::InvalidConfig("epochs must be >= 1".into()));
        }
        if !(self.learning_rate > T::zero()) {
            return Err(AnfisError::InvalidConfig("learning rate must be positive".into()));
        }
        if !(self.huber_delta > T::zero()) {
            return Err(AnfisError::InvalidConfig("huber delta must be positive".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(AnfisError::InvalidConfig("train fraction must be in (0, 1)".into()));
        }
        Ok(())
    }

    fn adam(&self) -> AdamParams<T> {
        AdamParams {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }
}

/// Train/validation loss after one epoch's update.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss<T> {
    pub train: T,
    pub validation: T,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum TrainOutcome {
    Completed,
    /// Loss went non-finite; the returned model is the last good one.
    Aborted { epoch: usize },
}

/// Result of a training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainRun<T> {
    pub model: AnfisModel<T>,
    pub history: Vec<EpochLoss<T>>,
    pub outcome: TrainOutcome,
}

impl<T: Scalar> TrainRun<T> {
    pub fn summary(&self) -> TrainingSummary<T> {
        let last = self.history.last();
        TrainingSummary {
            epochs_run: self.history.len(),
            final_train_loss: last.map_or(T::nan(), |l| l.train),
            final_validation_loss: last.map_or(T::nan(), |l| l.validation),
            aborted_at: match self.outcome {
                TrainOutcome::Completed => None,
                TrainOutcome::Aborted { epoch } => Some(epoch),
            },
        }
    }
}

/// Flat view of the trainable parameters. Frozen antecedents are excluded;
/// consequents always train.
pub(crate) struct ParamLayout {
    /// indices in the flat vector holding widths (clamped after each step)
    width_slots: Vec<usize>,
}

pub(crate) fn pack<T: Scalar>(model: &AnfisModel<T>) -> (Vec<T>, ParamLayout) {
    let mut params = Vec::with_capacity(model.trainable_dims());
    let mut width_slots = Vec::new();
    for rule in &model.rules {
        if !rule.antecedent_frozen {
            params.extend_from_slice(&rule.centers);
            for &w in &rule.widths {
                width_slots.push(params.len());
                params.push(w);
            }
        }
        params.extend_from_slice(&rule.coefficients);
        params.push(rule.bias);
    }
    (params, ParamLayout { width_slots })
}

pub(crate) fn unpack<T: Scalar>(model: &mut AnfisModel<T>, params: &[T]) {
    let mut i = 0;
    for rule in &mut model.rules {
        if !rule.antecedent_frozen {
            for c in &mut rule.centers {
                *c = params[i];
                i += 1;
            }
            for w in &mut rule.widths {
                *w = params[i];
                i += 1;
            }
        }
        for a in &mut rule.coefficients {
            *a = params[i];
            i += 1;
        }
        rule.bias = params[i];
        i += 1;
    }
    debug_assert_eq!(i, params.len());
}

/// Mean Huber loss and its gradient w.r.t. the packed parameters, over
/// normalized samples.
pub(crate) fn loss_and_grad<T: Scalar>(
    model: &AnfisModel<T>,
    xs: &[Vec<T>],
    ts: &[T],
    delta: T,
) -> Result<(T, Vec<T>), AnfisError> {
    let (params, _) = pack(model);
    let mut grads = vec![T::zero(); params.len()];
    let n = T::of_usize(xs.len());
    let mut residuals = Vec::with_capacity(xs.len());

    for (x, &t) in xs.iter().zip(ts) {
        let (y, firing) = model.forward(x)?;
        let r = y - t;
        residuals.push(r);
        let dy = huber_grad(r, delta) / n;

        let mut i = 0;
        for (rule, &w) in model.rules.iter().zip(&firing) {
            let f = rule.consequent(x);
            let glw = dy * w * (f - y);
            if !rule.antecedent_frozen {
                for j in 0..model.input_dim {
                    let d = x[j] - rule.centers[j];
                    let s = rule.widths[j];
                    grads[i + j] = grads[i + j] + glw * d / (s * s);
                    grads[i + model.input_dim + j] =
                        grads[i + model.input_dim + j] + glw * d * d / (s * s * s);
                }
                i += 2 * model.input_dim;
            }
            let gf = dy * w;
            for j in 0..model.input_dim {
                grads[i + j] = grads[i + j] + gf * x[j];
            }
            grads[i + model.input_dim] = grads[i + model.input_dim] + gf;
            i += model.input_dim + 1;
        }
    }
    Ok((huber(&residuals, delta), grads))
}

fn mean_loss<T: Scalar>(
    model: &AnfisModel<T>,
    xs: &[Vec<T>],
    ts: &[T],
    delta: T,
) -> Result<T, AnfisError> {
    let residuals: Result<Vec<T>, _> = xs
        .iter()
        .zip(ts)
        .map(|(x, &t)| model.forward(x).map(|(y, _)| y - t))
        .collect();
    Ok(huber(&residuals?, delta))
}

fn normalize_set<T: Scalar>(model: &AnfisModel<T>, ds: &RegressionDataset<T>) -> (Vec<Vec<T>>, Vec<T>) {
    let xs = ds.inputs.iter().map(|x| model.normalization.normalize_input(x)).collect();
    let ts = ds.targets.iter().map(|&t| model.normalization.normalize_target(t)).collect();
    (xs, ts)
}

/// Train a model on the dataset with a single seeded 70/30 split.
///
/// History holds train/validation loss after every epoch. A non-finite loss
/// aborts the run and returns the parameters from before the bad step.
pub fn train<T: Scalar>(
    model: &AnfisModel<T>,
    dataset: &RegressionDataset<T>,
    config: &TrainingConfig<T>,
) -> Result<TrainRun<T>, AnfisError> {
    config.validate()?;
    if dataset.len() < 10 {
        return Err(AnfisError::TooFewSamples { got: dataset.len(), need: 10 });
    }
    let (train_set, val_set) = dataset
        .split(config.train_fraction, config.seed)
        .map_err(|e| AnfisError::InvalidConfig(e.to_string()))?;

    let mut model = model.clone();
    let (train_x, train_t) = normalize_set(&model, &train_set);
    let (val_x, val_t) = normalize_set(&model, &val_set);

    let (mut params, layout) = pack(&model);
    let mut adam = AdamState::new(params.len());
    let adam_cfg = config.adam();
    let floor = T::of(WIDTH_FLOOR);
    let mut history = Vec::with_capacity(config.epochs);

    for epoch in 1..=config.epochs {
        let snapshot = params.clone();
        let step = loss_and_grad(&model, &train_x, &train_t, config.huber_delta)
            .ok()
            .and_then(|(loss, grads)| {
                if !loss.is_finite() {
                    return None;
                }
                adam_step(&mut adam, &mut params, &grads, &adam_cfg).ok()
            });
        if step.is_some() {
            for &slot in &layout.width_slots {
                if params[slot] < floor {
                    params[slot] = floor;
                }
            }
            unpack(&mut model, &params);
        }
        let losses = step.and_then(|_| {
            let train = mean_loss(&model, &train_x, &train_t, config.huber_delta).ok()?;
            let validation = mean_loss(&model, &val_x, &val_t, config.huber_delta).ok()?;
            (train.is_finite() && validation.is_finite()).then_some(EpochLoss { train, validation })
        });
        match losses {
            Some(l) => history.push(l),
            None => {
                unpack(&mut model, &snapshot);
                log::warn!("training diverged at epoch {epoch}; keeping last good parameters");
                return Ok(TrainRun {
                    model,
                    history,
                    outcome: TrainOutcome::Aborted { epoch },
                });
            }
        }
    }
    Ok(TrainRun { model, history, outcome: TrainOutcome::Completed })
}
