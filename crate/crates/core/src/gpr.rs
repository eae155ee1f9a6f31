//! Gaussian process regression with the exponential kernel
//! `k(x, x') = sigma_f^2 * exp(-||x - x'|| / l)`.
//!
//! Fitting factorizes `K + sigma_n^2 I` with a plain Cholesky decomposition
//! and refuses ill-conditioned systems. Prediction gives the posterior mean
//! and the latent (noise-free) posterior standard deviation, both in raw
//! target units.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{Normalization, RegressionDataset};
use crate::metrics::regression_metrics;
use crate::scalar::Scalar;

/// Diagonal jitter added before factorization.
pub const JITTER: f64 = 1e-10;

/// Pivots below this are treated as a non-positive-definite system.
pub const PIVOT_FLOOR: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum GprError {
    #[error("empty dataset")]
    EmptyDataset,
    #[error("invalid hyperparameters: {0}")]
    InvalidHyper(String),
    #[error("kernel matrix is not positive definite (smallest pivot {smallest_pivot:.3e} at row {row})")]
    NotPositiveDefinite { smallest_pivot: f64, row: usize },
    #[error("input has dimension {got}, model expects {expected}")]
    InputDimension { got: usize, expected: usize },
    #[error("no hyperparameter candidate produced a usable fit")]
    GridExhausted,
    #[error("model file error: {0}")]
    File(String),
}

/// Exponential-kernel hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GprHyper<T> {
    pub signal_std: T,
    pub length_scale: T,
    pub noise_std: T,
}

impl<T: Scalar> GprHyper<T> {
    pub fn new(signal_std: T, length_scale: T, noise_std: T) -> Self {
        Self { signal_std, length_scale, noise_std }
    }

    pub fn validate(&self) -> Result<(), GprError> {
        if !(self.signal_std > T::zero()) {
            return Err(GprError::InvalidHyper("signal_std must be > 0".into()));
        }
        if !(self.length_scale > T::zero()) {
            return Err(GprError::InvalidHyper("length_scale must be > 0".into()));
        }
        if self.noise_std < T::zero() {
            return Err(GprError::InvalidHyper("noise_std must be >= 0".into()));
        }
        Ok(())
    }
}

/// Exponential covariance between two equal-length points.
pub fn kernel<T: Scalar>(x1: &[T], x2: &[T], hyper: &GprHyper<T>) -> T {
    debug_assert_eq!(x1.len(), x2.len());
    let d2: T = x1
        .iter()
        .zip(x2)
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum();
    hyper.signal_std * hyper.signal_std * (-d2.sqrt() / hyper.length_scale).exp()
}

/// Row-major lower-triangular Cholesky factor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LowerTriangular<T> {
    pub n: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> LowerTriangular<T> {
    /// Factor a symmetric matrix (row-major, dense). Fails when any pivot
    /// drops below [`PIVOT_FLOOR`].
    pub fn factor(a: &[T], n: usize) -> Result<Self, GprError> {
        let mut l = vec![T::zero(); n * n];
        let floor = T::of(PIVOT_FLOOR);
        let mut smallest = T::infinity();
        for j in 0..n {
            let mut d = a[j * n + j];
            for k in 0..j {
                d = d - l[j * n + k] * l[j * n + k];
            }
            smallest = smallest.min(d);
            if d < floor {
                return Err(GprError::NotPositiveDefinite {
                    smallest_pivot: smallest.to_f64().unwrap_or(f64::NAN),
                    row: j,
                });
            }
            let diag = d.sqrt();
            l[j * n + j] = diag;
            for i in (j + 1)..n {
                let mut s = a[i * n + j];
                for k in 0..j {
                    s = s - l[i * n + k] * l[j * n + k];
                }
                l[i * n + j] = s / diag;
            }
        }
        Ok(Self { n, data: l })
    }

    /// Solve `L v = b`.
    pub fn forward_solve(&self, b: &[T]) -> Vec<T> {
        let n = self.n;
        let mut v = vec![T::zero(); n];
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s = s - self.data[i * n + k] * v[k];
            }
            v[i] = s / self.data[i * n + i];
        }
        v
    }

    /// Solve `L^T w = v`.
    pub fn backward_solve(&self, v: &[T]) -> Vec<T> {
        let n = self.n;
        let mut w = vec![T::zero(); n];
        for i in (0..n).rev() {
            let mut s = v[i];
            for k in (i + 1)..n {
                s = s - self.data[k * n + i] * w[k];
            }
            w[i] = s / self.data[i * n + i];
        }
        w
    }

    /// Solve `(L L^T) x = b`.
    pub fn solve(&self, b: &[T]) -> Vec<T> {
        self.backward_solve(&self.forward_solve(b))
    }
}

/// A fitted Gaussian process regressor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GprModel<T> {
    /// training inputs, normalized
    pub x_train: Vec<Vec<T>>,
    /// mean of the normalized targets, subtracted before solving
    pub y_mean: T,
    /// weights solving (K + sigma_n^2 I) alpha = y - y_mean
    pub alpha: Vec<T>,
    pub chol: LowerTriangular<T>,
    pub hyper: GprHyper<T>,
    pub normalization: Normalization<T>,
    pub target_name: String,
}

/// Posterior mean and standard deviation in raw target units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GprOutput<T> {
    pub mean: T,
    pub std: T,
}

/// Fit on a dataset. Normalization stats come from the same dataset.
pub fn fit<T: Scalar>(
    dataset: &RegressionDataset<T>,
    hyper: &GprHyper<T>,
) -> Result<GprModel<T>, GprError> {
    hyper.validate()?;
    if dataset.is_empty() {
        return Err(GprError::EmptyDataset);
    }
    let normalization = Normalization::from_dataset(dataset);
    let x_train: Vec<Vec<T>> = dataset
        .inputs
        .iter()
        .map(|x| normalization.normalize_input(x))
        .collect();
    let y: Vec<T> = dataset
        .targets
        .iter()
        .map(|&t| normalization.normalize_target(t))
        .collect();
    let n = y.len();
    let y_mean = y.iter().copied().sum::<T>() / T::of_usize(n);

    let diag = hyper.noise_std * hyper.noise_std + T::of(JITTER);
    let mut k = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..=i {
            let v = kernel(&x_train[i], &x_train[j], hyper);
            k[i * n + j] = v;
            k[j * n + i] = v;
        }
        k[i * n + i] = k[i * n + i] + diag;
    }
    let chol = LowerTriangular::factor(&k, n)?;
    let centered: Vec<T> = y.iter().map(|&v| v - y_mean).collect();
    let alpha = chol.solve(&centered);
    Ok(GprModel {
        x_train,
        y_mean,
        alpha,
        chol,
        hyper: *hyper,
        normalization,
        target_name: dataset.target_name.clone(),
    })
}

impl<T: Scalar> GprModel<T> {
    /// Posterior mean and latent standard deviation at a raw input.
    pub fn predict(&self, raw: &[T]) -> Result<GprOutput<T>, GprError> {
        let dim = self.x_train[0].len();
        if raw.len() != dim {
            return Err(GprError::InputDimension { got: raw.len(), expected: dim });
        }
        let x = self.normalization.normalize_input(raw);
        let k_star: Vec<T> = self
            .x_train
            .iter()
            .map(|xt| kernel(&x, xt, &self.hyper))
            .collect();
        let mean_n = self.y_mean
            + k_star
                .iter()
                .zip(&self.alpha)
                .map(|(&k, &a)| k * a)
                .sum::<T>();
        let v = self.chol.forward_solve(&k_star);
        let prior = kernel(&x, &x, &self.hyper);
        let var = (prior - v.iter().map(|&t| t * t).sum::<T>()).max(T::zero());
        let range = self.normalization.target_range();
        Ok(GprOutput {
            mean: self.normalization.denormalize_target(mean_n),
            std: var.sqrt() * range,
        })
    }

    /// Held-out R² of this model over a raw dataset.
    pub fn r2_on(&self, test: &RegressionDataset<T>) -> Option<T> {
        let predicted: Vec<T> = test
            .inputs
            .iter()
            .map(|x| self.predict(x).map(|o| o.mean).unwrap_or_else(|_| T::nan()))
            .collect();
        regression_metrics(&test.targets, &predicted).ok().and_then(|m| m.r2)
    }
}

/// Result of a grid search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuneReport<T> {
    pub best: GprHyper<T>,
    pub held_out_r2: T,
    pub candidates_tried: usize,
    pub candidates_failed: usize,
}

/// Pick the grid point with the best held-out R² under the shared 70/30
/// split protocol. Earlier candidates win ties.
pub fn tune<T: Scalar>(
    dataset: &RegressionDataset<T>,
    grid: &[GprHyper<T>],
    train_fraction: f64,
    seed: u64,
) -> Result<TuneReport<T>, GprError> {
    if grid.is_empty() {
        return Err(GprError::GridExhausted);
    }
    let (train, test) = dataset
        .split(train_fraction, seed)
        .map_err(|e| GprError::InvalidHyper(e.to_string()))?;
    let mut best: Option<(GprHyper<T>, T)> = None;
    let mut failed = 0;
    for cand in grid {
        let Ok(model) = fit(&train, cand) else {
            failed += 1;
            continue;
        };
        let Some(r2) = model.r2_on(&test) else {
            failed += 1;
            continue;
        };
        if !r2.is_finite() {
            failed += 1;
            continue;
        }
        let better = match &best {
            None => true,
            Some((_, best_r2)) => r2 > *best_r2,
        };
        if better {
            best = Some((*cand, r2));
        }
    }
    let (best, held_out_r2) = best.ok_or(GprError::GridExhausted)?;
    Ok(TuneReport {
        best,
        held_out_r2,
        candidates_tried: grid.len(),
        candidates_failed: failed,
    })
}

/// Default search grid over normalized features.
pub fn default_grid<T: Scalar>() -> Vec<GprHyper<T>> {
    let mut grid = Vec::new();
    for &sf in &[0.5, 1.0, 2.0] {
        for &ls in &[0.1, 0.25, 0.5, 1.0, 2.0] {
            for &sn in &[1e-4, 1e-3, 1e-2, 5e-2] {
                grid.push(GprHyper::new(T::of(sf), T::of(ls), T::of(sn)));
            }
        }
    }
    grid
}

/// On-disk model document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GprArtifact<T> {
    pub model: GprModel<T>,
    pub tuning: Option<TuneReport<T>>,
    pub fit_time_s: f64,
}

impl<T: Scalar> GprArtifact<T> {
    pub fn save(&self, path: &std::path::Path) -> Result<(), GprError> {
        let text = serde_json::to_string_pretty(self).map_err(|e| GprError::File(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| GprError::File(e.to_string()))
    }

    pub fn load(path: &std::path::Path) -> Result<Self, GprError> {
        let text = std::fs::read_to_string(path).map_err(|e| GprError::File(e.to_string()))?;
        serde_json::from_str(&text).map_err(|e| GprError::File(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn hyper(sf: f64, ls: f64, sn: f64) -> GprHyper<f64> {
        GprHyper::new(sf, ls, sn)
    }

    /// Independent oracle: dense Gaussian elimination with partial pivoting.
    fn dense_solve(a: &[f64], b: &[f64], n: usize) -> Vec<f64> {
        let mut m = vec![0.0; n * (n + 1)];
        for i in 0..n {
            for j in 0..n {
                m[i * (n + 1) + j] = a[i * n + j];
            }
            m[i * (n + 1) + n] = b[i];
        }
        for col in 0..n {
            let pivot = (col..n)
                .max_by(|&x, &y| {
                    m[x * (n + 1) + col]
                        .abs()
                        .partial_cmp(&m[y * (n + 1) + col].abs())
                        .unwrap()
                })
                .unwrap();
            if pivot != col {
                for j in 0..=n {
                    m.swap(col * (n + 1) + j, pivot * (n + 1) + j);
                }
            }
            let p = m[col * (n + 1) + col];
            for row in (col + 1)..n {
                let f = m[row * (n + 1) + col] / p;
                for j in col..=n {
                    m[row * (n + 1) + j] -= f * m[col * (n + 1) + j];
                }
            }
        }
        let mut x = vec![0.0; n];
        for i in (0..n).rev() {
            let mut s = m[i * (n + 1) + n];
            for j in (i + 1)..n {
                s -= m[i * (n + 1) + j] * x[j];
            }
            x[i] = s / m[i * (n + 1) + i];
        }
        x
    }

    fn random_dataset(n: usize, seed: u64) -> RegressionDataset<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut inputs = Vec::with_capacity(n);
        let mut targets = Vec::with_capacity(n);
        for _ in 0..n {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..1.0)).collect();
            targets.push((x[0] * 3.0).sin() + x[1] * x[2] + rng.random_range(-0.05..0.05));
            inputs.push(x);
        }
        RegressionDataset::new(inputs, targets).unwrap()
    }

    #[test]
    fn kernel_zero_distance_is_signal_variance() {
        let h = hyper(1.5, 0.7, 0.0);
        let x = [0.3, 0.4, 0.5];
        assert!((kernel(&x, &x, &h) - 2.25).abs() < 1e-15);
    }

    #[test]
    fn kernel_at_one_length_scale_is_exp_minus_one() {
        let h = hyper(1.0, 0.5, 0.0);
        let a = [0.0, 0.0, 0.0];
        let b = [0.5, 0.0, 0.0]; // distance = length scale
        let v = kernel(&a, &b, &h);
        assert!((v - (-1.0f64).exp()).abs() < 1e-12);
        assert!((v - 0.367879441).abs() < 1e-9);
    }

    #[test]
    fn kernel_is_symmetric_and_bounded() {
        let h = hyper(1.3, 0.4, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let a: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let b: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let kab = kernel(&a, &b, &h);
            assert_eq!(kab, kernel(&b, &a, &h));
            assert!(kab > 0.0 && kab <= 1.3 * 1.3 + 1e-15);
        }
    }

    #[test]
    fn single_point_interpolates_exactly() {
        let ds = RegressionDataset::new(vec![vec![0.2, 0.4, 0.6]], vec![7.5]).unwrap();
        let model = fit(&ds, &hyper(1.0, 0.5, 0.0)).unwrap();
        let out = model.predict(&[0.2, 0.4, 0.6]).unwrap();
        assert!((out.mean - 7.5).abs() < 1e-9);
        // shrinkage formula collapses to y0 when y_mean = y0
        let noisy = fit(&ds, &hyper(1.0, 0.5, 0.3)).unwrap();
        let out = noisy.predict(&[0.2, 0.4, 0.6]).unwrap();
        assert!((out.mean - 7.5).abs() < 1e-9);
    }

    #[test]
    fn two_point_shrinkage_matches_hand_solution() {
        // distant points, negligible cross-covariance: each acts like a 1x1
        // system pred = y_mean + sf^2/(sf^2+sn^2) * (y - y_mean)
        let ds = RegressionDataset::new(
            vec![vec![0.0, 0.0, 0.0], vec![1.0, 1.0, 1.0]],
            vec![2.0, 6.0],
        )
        .unwrap();
        let h = hyper(1.0, 0.02, 0.5); // cross-covariance exp(-sqrt(3)/0.02) ~ 0
        let model = fit(&ds, &h).unwrap();
        let out = model.predict(&[0.0, 0.0, 0.0]).unwrap();
        // normalized: y = [0, 1], mean 0.5; shrunk = 0.5 + (1/(1+0.25))*(-0.5)
        let expected_norm = 0.5 - 0.5 / 1.25;
        let expected = 2.0 + expected_norm * 4.0;
        assert!((out.mean - expected).abs() < 1e-6, "{} vs {expected}", out.mean);
    }

    #[test]
    fn duplicate_rows_with_zero_noise_are_rejected() {
        let ds = RegressionDataset::new(
            vec![vec![0.5, 0.5, 0.5], vec![0.5, 0.5, 0.5], vec![0.1, 0.9, 0.3]],
            vec![1.0, 1.0, 2.0],
        )
        .unwrap();
        let err = fit(&ds, &hyper(1.0, 0.5, 0.0));
        match err {
            Err(GprError::NotPositiveDefinite { smallest_pivot, .. }) => {
                assert!(smallest_pivot < PIVOT_FLOOR);
            }
            other => panic!("expected non-PD error, got {other:?}"),
        }
    }

    #[test]
    fn zero_noise_interpolates_training_points() {
        let ds = random_dataset(40, 3);
        let model = fit(&ds, &hyper(1.0, 0.5, 0.0)).unwrap();
        for (x, &y) in ds.inputs.iter().zip(&ds.targets) {
            let out = model.predict(x).unwrap();
            assert!((out.mean - y).abs() <= 1e-6, "residual {}", (out.mean - y).abs());
            assert!(out.std <= 1e-4);
        }
    }

    #[test]
    fn far_input_reverts_to_prior() {
        let ds = random_dataset(25, 5);
        let h = hyper(1.0, 0.3, 1e-3);
        let model = fit(&ds, &h).unwrap();
        // ~300 length scales away from every training point
        let out = model.predict(&[100.0, 100.0, 100.0]).unwrap();
        let range = model.normalization.target_range();
        let raw_mean = model.normalization.denormalize_target(model.y_mean);
        assert!((out.mean - raw_mean).abs() < 1e-6 * range);
        assert!((out.std / range - 1.0).abs() < 1e-6); // sigma_f = 1 normalized
    }

    #[test]
    fn posterior_variance_bounded_by_prior() {
        let ds = random_dataset(30, 7);
        let h = hyper(1.4, 0.4, 0.05);
        let model = fit(&ds, &h).unwrap();
        let range = model.normalization.target_range();
        let bound = (1.4f64 * 1.4 + 0.05 * 0.05).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..200 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-1.0..2.0)).collect();
            let out = model.predict(&x).unwrap();
            let std_norm = out.std / range;
            assert!(std_norm >= 0.0 && std_norm <= bound + 1e-12);
        }
    }

    #[test]
    fn cholesky_reconstructs_covariance() {
        let ds = random_dataset(20, 11);
        let h = hyper(1.0, 0.5, 0.1);
        let model = fit(&ds, &h).unwrap();
        let n = ds.len();
        let l = &model.chol;
        for i in 0..n {
            for j in 0..n {
                let mut rebuilt = 0.0;
                for k in 0..n {
                    rebuilt += l.data[i * n + k] * l.data[j * n + k];
                }
                let mut expected = kernel(&model.x_train[i], &model.x_train[j], &h);
                if i == j {
                    expected += 0.1 * 0.1 + JITTER;
                }
                assert!((rebuilt - expected).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn cholesky_predictions_match_dense_solve_oracle() {
        for seed in [1u64, 2, 3] {
            for n in [5usize, 17, 50] {
                let ds = random_dataset(n, seed);
                let h = hyper(1.0, 0.4, 0.05);
                let model = fit(&ds, &h).unwrap();

                // oracle path: dense solve on the same normalized system
                let xs = &model.x_train;
                let mut k = vec![0.0; n * n];
                for i in 0..n {
                    for j in 0..n {
                        k[i * n + j] = kernel(&xs[i], &xs[j], &h);
                        if i == j {
                            k[i * n + j] += 0.05 * 0.05 + JITTER;
                        }
                    }
                }
                let y: Vec<f64> = ds
                    .targets
                    .iter()
                    .map(|&t| model.normalization.normalize_target(t) - model.y_mean)
                    .collect();
                let alpha_oracle = dense_solve(&k, &y, n);

                let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
                for _ in 0..20 {
                    let raw: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..1.0)).collect();
                    let x = model.normalization.normalize_input(&raw);
                    let k_star: Vec<f64> = xs.iter().map(|xt| kernel(&x, xt, &h)).collect();
                    let mean_oracle_n = model.y_mean
                        + k_star.iter().zip(&alpha_oracle).map(|(a, b)| a * b).sum::<f64>();
                    let mean_oracle = model.normalization.denormalize_target(mean_oracle_n);
                    let out = model.predict(&raw).unwrap();
                    assert!(
                        (out.mean - mean_oracle).abs() < 1e-8,
                        "n={n} seed={seed}: {} vs {mean_oracle}",
                        out.mean
                    );
                }
            }
        }
    }

    #[test]
    fn tune_grid_of_one_returns_it() {
        let ds = random_dataset(40, 13);
        let h = hyper(1.0, 0.4, 0.05);
        let report = tune(&ds, &[h], 0.70, 21).unwrap();
        assert_eq!(report.best, h);
        assert_eq!(report.candidates_tried, 1);
    }

    #[test]
    fn tune_is_deterministic() {
        let ds = random_dataset(60, 15);
        let grid = default_grid::<f64>();
        let a = tune(&ds, &grid, 0.70, 33).unwrap();
        let b = tune(&ds, &grid, 0.70, 33).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn tune_recovers_generating_hyper_or_better() {
        // sample a function from a GP at known hyperparameters
        let gen = hyper(1.0, 0.5, 0.0);
        let n = 60;
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let inputs: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..3).map(|_| rng.random_range(0.0..1.0)).collect())
            .collect();
        let mut k = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                k[i * n + j] = kernel(&inputs[i], &inputs[j], &gen);
                if i == j {
                    k[i * n + j] += 1e-8;
                }
            }
        }
        let l = LowerTriangular::factor(&k, n).unwrap();
        let z: Vec<f64> = (0..n)
            .map(|_| rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng))
            .collect();
        let targets: Vec<f64> = (0..n)
            .map(|i| (0..=i).map(|j| l.data[i * n + j] * z[j]).sum())
            .collect();
        let ds = RegressionDataset::new(inputs, targets).unwrap();

        let mut grid = default_grid::<f64>();
        grid.push(gen);
        let report = tune(&ds, &grid, 0.70, 5).unwrap();
        // the winner must generalize at least as well as the truth
        let (train, test) = ds.split(0.70, 5).unwrap();
        let truth_r2 = fit(&train, &gen).unwrap().r2_on(&test).unwrap();
        assert!(report.held_out_r2 >= truth_r2 - 1e-12);
    }

    #[test]
    fn rejects_invalid_hyper_and_empty_grid() {
        let ds = random_dataset(10, 19);
        assert!(matches!(
            fit(&ds, &hyper(0.0, 0.5, 0.0)),
            Err(GprError::InvalidHyper(_))
        ));
        assert!(matches!(
            tune(&ds, &[], 0.70, 0),
            Err(GprError::GridExhausted)
        ));
    }

    #[test]
    fn fits_in_f32_too() {
        let ds64 = random_dataset(20, 23);
        let ds = RegressionDataset::<f32>::new(
            ds64.inputs.iter().map(|x| x.iter().map(|&v| v as f32).collect()).collect(),
            ds64.targets.iter().map(|&t| t as f32).collect(),
        )
        .unwrap();
        let model = fit(&ds, &GprHyper::<f32>::new(1.0, 0.5, 0.05)).unwrap();
        let out = model.predict(&[0.5f32, 0.5, 0.5]).unwrap();
        assert!(out.mean.is_finite() && out.std >= 0.0);
    }
}
