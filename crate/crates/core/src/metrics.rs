//! Shared numerics: Huber loss, Adam stepper, regression metrics, and the
//! model-comparison report.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("length mismatch: actual has {actual} entries, predicted has {predicted}")]
    LengthMismatch { actual: usize, predicted: usize },
    #[error("empty input")]
    Empty,
    #[error("non-finite gradient at index {0}")]
    NonFiniteGradient(usize),
    #[error("dimension mismatch: params {params}, grads {grads}, state {state}")]
    DimensionMismatch {
        params: usize,
        grads: usize,
        state: usize,
    },
    #[error("comparison report needs at least 2 models, got {0}")]
    TooFewModels(usize),
}

/// Mean Huber loss over a residual vector.
///
/// Per element: `a²/2` when `|a| <= delta`, else `delta·(|a| - delta/2)`.
pub fn huber<T: Scalar>(residuals: &[T], delta: T) -> T {
    assert!(delta > T::zero(), "huber delta must be positive");
    if residuals.is_empty() {
        return T::zero();
    }
    let half = T::of(0.5);
    let total: T = residuals
        .iter()
        .map(|&a| {
            let abs = a.abs();
            if abs <= delta {
                half * a * a
            } else {
                delta * (abs - half * delta)
            }
        })
        .sum();
    total / T::of_usize(residuals.len())
}

/// Derivative of the per-element Huber loss at residual `a`.
pub fn huber_grad<T: Scalar>(a: T, delta: T) -> T {
    if a.abs() <= delta {
        a
    } else {
        delta * a.signum()
    }
}

/// Standard regression quality metrics.
///
/// `r2` is `None` when the actuals are constant (zero total variance).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSet<T> {
    pub rmse: T,
    pub mse: T,
    pub mae: T,
    pub r2: Option<T>,
}

pub fn regression_metrics<T: Scalar>(
    actual: &[T],
    predicted: &[T],
) -> Result<MetricSet<T>, MetricsError> {
    if actual.len() != predicted.len() {
        return Err(MetricsError::LengthMismatch {
            actual: actual.len(),
            predicted: predicted.len(),
        });
    }
    if actual.is_empty() {
        return Err(MetricsError::Empty);
    }
    let n = T::of_usize(actual.len());
    let mut ss_res = T::zero();
    let mut abs_sum = T::zero();
    for (&a, &p) in actual.iter().zip(predicted) {
        let r = a - p;
        ss_res = ss_res + r * r;
        abs_sum = abs_sum + r.abs();
    }
    let mean = actual.iter().copied().sum::<T>() / n;
    let ss_tot: T = actual.iter().map(|&a| (a - mean) * (a - mean)).sum();
    let mse = ss_res / n;
    let r2 = if ss_tot > T::zero() {
        Some(T::one() - ss_res / ss_tot)
    } else {
        None
    };
    Ok(MetricSet {
        rmse: mse.sqrt(),
        mse,
        mae: abs_sum / n,
        r2,
    })
}

/// First/second moment state for the Adam optimizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub t: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(dim: usize) -> Self {
        Self {
            m: vec![T::zero(); dim],
            v: vec![T::zero(); dim],
            t: 0,
        }
    }
}

/// Adam hyperparameters (bias-corrected variant).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamParams<T> {
    pub learning_rate: T,
    pub beta1: T,
    pub beta2: T,
    pub epsilon: T,
}

impl<T: Scalar> AdamParams<T> {
    pub fn with_learning_rate(learning_rate: T) -> Self {
        Self {
            learning_rate,
            beta1: T::of(0.9),
            beta2: T::of(0.999),
            epsilon: T::of(1e-8),
        }
    }
}

/// One bias-corrected Adam update, applied in place.
pub fn adam_step<T: Scalar>(
    state: &mut AdamState<T>,
    params: &mut [T],
    grads: &[T],
    cfg: &AdamParams<T>,
) -> Result<(), MetricsError> {
    if params.len() != grads.len() || params.len() != state.m.len() {
        return Err(MetricsError::DimensionMismatch {
            params: params.len(),
            grads: grads.len(),
            state: state.m.len(),
        });
    }
    if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
        return Err(MetricsError::NonFiniteGradient(i));
    }
    state.t += 1;
    let one = T::one();
    let bc1 = one - cfg.beta1.powi(state.t as i32);
    let bc2 = one - cfg.beta2.powi(state.t as i32);
    for i in 0..params.len() {
        let g = grads[i];
        state.m[i] = cfg.beta1 * state.m[i] + (one - cfg.beta1) * g;
        state.v[i] = cfg.beta2 * state.v[i] + (one - cfg.beta2) * g * g;
        let m_hat = state.m[i] / bc1;
        let v_hat = state.v[i] / bc2;
        params[i] = params[i] - cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.epsilon);
    }
    Ok(())
}

/// Per-model inputs to the comparison report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelResult<T> {
    pub name: String,
    pub metrics: MetricSet<T>,
    pub train_time_s: f64,
    pub explainable: bool,
}

/// Comparison of trained models: metrics, wall times, and per-criterion
/// rankings (best first, ties resolved by name).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport<T> {
    pub models: Vec<ModelResult<T>>,
    /// criterion name -> model names ordered best-first
    pub rankings: Vec<(String, Vec<String>)>,
}

pub fn compare_report<T: Scalar>(
    mut results: Vec<ModelResult<T>>,
) -> Result<ComparisonReport<T>, MetricsError> {
    if results.len() < 2 {
        return Err(MetricsError::TooFewModels(results.len()));
    }
    results.sort_by(|a, b| a.name.cmp(&b.name));

    fn rank_by<T, K: PartialOrd>(
        results: &[ModelResult<T>],
        mut key: impl FnMut(&ModelResult<T>) -> K,
        ascending: bool,
    ) -> Vec<String> {
        let mut order: Vec<&ModelResult<T>> = results.iter().collect();
        // stable sort keeps name order on ties
        order.sort_by(|a, b| {
            let ka = key(a);
            let kb = key(b);
            let cmp = ka.partial_cmp(&kb).unwrap_or(std::cmp::Ordering::Equal);
            if ascending {
                cmp
            } else {
                cmp.reverse()
            }
        });
        order.into_iter().map(|m| m.name.clone()).collect()
    }

    let rankings = vec![
        (
            "rmse".to_string(),
            rank_by(&results, |m| m.metrics.rmse, true),
        ),
        ("mse".to_string(), rank_by(&results, |m| m.metrics.mse, true)),
        ("mae".to_string(), rank_by(&results, |m| m.metrics.mae, true)),
        (
            "r2".to_string(),
            rank_by(&results, |m| m.metrics.r2.unwrap_or_else(T::neg_infinity), false),
        ),
        (
            "train_time_s".to_string(),
            rank_by(&results, |m| m.train_time_s, true),
        ),
    ];
    Ok(ComparisonReport {
        models: results,
        rankings,
    })
}

impl<T: Scalar> ComparisonReport<T> {
    /// Plain-text table for the CLI.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<10} {:>12} {:>12} {:>12} {:>8} {:>14} {:>14}\n",
            "model", "rmse", "mse", "mae", "r2", "train_time_s", "explainability"
        ));
        for m in &self.models {
            let r2 = m
                .metrics
                .r2
                .map(|v| format!("{v:.4}"))
                .unwrap_or_else(|| "undef".to_string());
            out.push_str(&format!(
                "{:<10} {:>12.6} {:>12.6} {:>12.6} {:>8} {:>14.3} {:>14}\n",
                m.name,
                m.metrics.rmse,
                m.metrics.mse,
                m.metrics.mae,
                r2,
                m.train_time_s,
                if m.explainable { "auditable" } else { "complex" }
            ));
        }
        out.push_str("rankings (best first):\n");
        for (criterion, names) in &self.rankings {
            out.push_str(&format!("  {:<14} {}\n", criterion, names.join(" > ")));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const TIGHT: f64 = 1e-12;

    #[test]
    fn huber_zero_residual_is_zero() {
        assert_eq!(huber(&[0.0], 1.0), 0.0);
        assert_eq!(huber::<f64>(&[], 1.0), 0.0);
    }

    #[test]
    fn huber_hand_computed_branches() {
        // quadratic branch: 0.5 * 0.5^2 = 0.125
        assert!((huber::<f64>(&[0.5], 1.0) - 0.125).abs() < TIGHT);
        // linear branch: 1 * (2 - 0.5) = 1.5
        assert!((huber::<f64>(&[2.0], 1.0) - 1.5).abs() < TIGHT);
        // mean over both
        assert!((huber::<f64>(&[0.5, 2.0], 1.0) - (0.125 + 1.5) / 2.0).abs() < TIGHT);
    }

    #[test]
    fn huber_large_delta_is_half_mse() {
        let res: Vec<f64> = (-100..=100).map(|i| i as f64 / 10.0).collect();
        let h = huber(&res, 1e6);
        let half_mse = res.iter().map(|r| 0.5 * r * r).sum::<f64>() / res.len() as f64;
        assert!((h - half_mse).abs() < TIGHT);
    }

    #[test]
    fn huber_small_delta_approaches_mae() {
        // linear branch everywhere: huber/delta = mean|a| - delta/2
        let res = [0.5, -1.2, 3.0, -0.001];
        let delta = 1e-6;
        let mae = res.iter().map(|r: &f64| r.abs()).sum::<f64>() / res.len() as f64;
        assert!((huber(&res, delta) / delta - (mae - delta / 2.0)).abs() <= 1e-9);
    }

    #[test]
    fn huber_continuous_at_delta() {
        for delta in [0.5f64, 1.0, 1.35, 2.0] {
            let quad = 0.5 * delta * delta;
            let lin = delta * (delta - 0.5 * delta);
            assert_eq!(quad, lin);
            assert!((huber(&[delta], delta) - quad).abs() < TIGHT);
        }
    }

    proptest! {
        #[test]
        fn huber_nonnegative_and_zero_iff_zero(res in proptest::collection::vec(-1e3f64..1e3, 1..40), delta in 1e-3f64..10.0) {
            let h = huber(&res, delta);
            prop_assert!(h >= 0.0);
            if res.iter().all(|r| *r == 0.0) {
                prop_assert_eq!(h, 0.0);
            } else {
                prop_assert!(h > 0.0);
            }
        }
    }

    #[test]
    fn metrics_perfect_prediction() {
        let m = regression_metrics::<f64>(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(m.rmse, 0.0);
        assert_eq!(m.r2, Some(1.0));
    }

    #[test]
    fn metrics_hand_computed() {
        // SSres = 1 + 0 + 1 = 2, SStot = 2 -> r2 = 0
        let m = regression_metrics::<f64>(&[1.0, 2.0, 3.0], &[2.0, 2.0, 2.0]).unwrap();
        assert!((m.mse - 2.0 / 3.0).abs() < TIGHT);
        assert!((m.mae - 2.0 / 3.0).abs() < TIGHT);
        assert!(m.r2.unwrap().abs() < TIGHT);
    }

    #[test]
    fn metrics_mean_predictor_r2_zero() {
        let actual = [4.0, 8.0, 12.0, 0.0];
        let mean = actual.iter().sum::<f64>() / 4.0;
        let m = regression_metrics(&actual, &[mean; 4]).unwrap();
        assert!(m.r2.unwrap().abs() < TIGHT);
    }

    #[test]
    fn metrics_constant_actuals_r2_undefined() {
        let m = regression_metrics::<f64>(&[5.0, 5.0, 5.0], &[5.0, 4.0, 6.0]).unwrap();
        assert_eq!(m.r2, None);
    }

    #[test]
    fn metrics_length_mismatch_errors() {
        assert!(matches!(
            regression_metrics::<f64>(&[1.0], &[1.0, 2.0]),
            Err(MetricsError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn metrics_rmse_squares_to_mse() {
        let m = regression_metrics::<f64>(&[1.0, 2.0, 3.0, 7.0], &[0.9, 2.2, 2.7, 7.4]).unwrap();
        assert!((m.rmse * m.rmse - m.mse).abs() < TIGHT);
    }

    #[test]
    fn adam_zero_gradient_keeps_params() {
        let mut st = AdamState::new(2);
        let mut p = [1.0, -2.0];
        adam_step(&mut st, &mut p, &[0.0, 0.0], &AdamParams::with_learning_rate(0.01)).unwrap();
        assert_eq!(p, [1.0, -2.0]);
        assert_eq!(st.t, 1);
    }

    #[test]
    fn adam_first_step_hand_computed() {
        // w = 1, f = w^2, g = 2: m_hat = 2, v_hat = 4, w -> 1 - 0.01*2/(2+1e-8)
        let mut st = AdamState::new(1);
        let mut p = [1.0];
        adam_step(&mut st, &mut p, &[2.0], &AdamParams::with_learning_rate(0.01)).unwrap();
        let m_hat = st.m[0] / (1.0 - 0.9f64);
        let v_hat = st.v[0] / (1.0 - 0.999f64);
        assert!((m_hat - 2.0).abs() < TIGHT);
        assert!((v_hat - 4.0).abs() < 1e-10);
        assert!((p[0] - 0.99).abs() <= 1e-8);
    }

    #[test]
    fn adam_descends_quadratic() {
        let mut st = AdamState::new(1);
        let mut p = [1.0f64];
        let cfg = AdamParams::with_learning_rate(0.01);
        let mut last = p[0].abs();
        let mut decreasing = 0;
        for _ in 0..200 {
            let g = 2.0 * p[0];
            adam_step(&mut st, &mut p, &[g], &cfg).unwrap();
            if p[0].abs() <= last {
                decreasing += 1;
            }
            last = p[0].abs();
        }
        assert!(p[0].abs() < 0.5, "w = {}", p[0]);
        assert!(decreasing >= 190);
    }

    #[test]
    fn adam_is_deterministic() {
        let run = || {
            let mut st = AdamState::new(3);
            let mut p = [0.3f64, -0.7, 2.0];
            let cfg = AdamParams::with_learning_rate(0.005);
            for i in 0..50 {
                let gs = [p[0] + i as f64 * 0.1, p[1] * 2.0, p[2].sin()];
                adam_step(&mut st, &mut p, &gs, &cfg).unwrap();
            }
            (st, p)
        };
        let (s1, p1) = run();
        let (s2, p2) = run();
        assert_eq!(s1, s2);
        assert_eq!(p1, p2);
    }

    #[test]
    fn adam_rejects_non_finite_gradient() {
        let mut st = AdamState::new(1);
        let mut p = [1.0];
        let err = adam_step(&mut st, &mut p, &[f64::NAN], &AdamParams::with_learning_rate(0.01));
        assert!(matches!(err, Err(MetricsError::NonFiniteGradient(0))));
    }

    fn sample_results() -> Vec<ModelResult<f64>> {
        vec![
            ModelResult {
                name: "anfis".into(),
                metrics: MetricSet { rmse: 0.02, mse: 4e-4, mae: 0.015, r2: Some(0.86) },
                train_time_s: 12.7,
                explainable: true,
            },
            ModelResult {
                name: "gpr".into(),
                metrics: MetricSet { rmse: 0.018, mse: 3.2e-4, mae: 0.013, r2: Some(0.87) },
                train_time_s: 0.53,
                explainable: false,
            },
        ]
    }

    #[test]
    fn report_ranks_faster_model_first() {
        let report = compare_report(sample_results()).unwrap();
        let by_time = report
            .rankings
            .iter()
            .find(|(c, _)| c == "train_time_s")
            .unwrap();
        assert_eq!(by_time.1[0], "gpr");
    }

    #[test]
    fn report_tie_is_stable_by_name() {
        let mut results = sample_results();
        results[0].metrics.rmse = 0.018;
        results[1].metrics.rmse = 0.018;
        let report = compare_report(results).unwrap();
        let by_rmse = report.rankings.iter().find(|(c, _)| c == "rmse").unwrap();
        assert_eq!(by_rmse.1, vec!["anfis".to_string(), "gpr".to_string()]);
    }

    #[test]
    fn report_round_trips_through_json() {
        let report = compare_report(sample_results()).unwrap();
        let text = serde_json::to_string_pretty(&report).unwrap();
        let back: ComparisonReport<f64> = serde_json::from_str(&text).unwrap();
        assert_eq!(report, back);
    }

    #[test]
    fn report_requires_two_models() {
        let one = sample_results().into_iter().take(1).collect();
        assert!(matches!(compare_report::<f64>(one), Err(MetricsError::TooFewModels(1))));
    }
}
