//! Training datasets: the flat feature/target view of cycle rows plus the
//! seeded 70/30 split protocol shared by both decision models.

use std::io::BufRead;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::cycle::DatasetRow;
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("empty dataset")]
    Empty,
    #[error("row {row} has {got} features, expected {expected}")]
    Ragged { row: usize, got: usize, expected: usize },
    #[error("non-finite value in row {0}")]
    NonFinite(usize),
    #[error("train fraction {0} outside (0, 1)")]
    BadSplit(f64),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Inputs and targets for one regression task.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionDataset<T> {
    pub inputs: Vec<Vec<T>>,
    pub targets: Vec<T>,
    pub feature_names: Vec<String>,
    pub target_name: String,
}

impl<T: Scalar> RegressionDataset<T> {
    pub fn new(inputs: Vec<Vec<T>>, targets: Vec<T>) -> Result<Self, DatasetError> {
        Self::named(inputs, targets, &[], "target")
    }

    pub fn named(
        inputs: Vec<Vec<T>>,
        targets: Vec<T>,
        feature_names: &[&str],
        target_name: &str,
    ) -> Result<Self, DatasetError> {
        if inputs.is_empty() || inputs.len() != targets.len() {
            return Err(DatasetError::Empty);
        }
        let dim = inputs[0].len();
        for (i, x) in inputs.iter().enumerate() {
            if x.len() != dim {
                return Err(DatasetError::Ragged { row: i, got: x.len(), expected: dim });
            }
            if x.iter().any(|v| !v.is_finite()) || !targets[i].is_finite() {
                return Err(DatasetError::NonFinite(i));
            }
        }
        let feature_names = if feature_names.len() == dim {
            feature_names.iter().map(|s| s.to_string()).collect()
        } else {
            (0..dim).map(|i| format!("x{i}")).collect()
        };
        Ok(Self { inputs, targets, feature_names, target_name: target_name.to_string() })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.inputs.first().map_or(0, Vec::len)
    }

    fn subset(&self, idx: &[usize]) -> Self {
        Self {
            inputs: idx.iter().map(|&i| self.inputs[i].clone()).collect(),
            targets: idx.iter().map(|&i| self.targets[i]).collect(),
            feature_names: self.feature_names.clone(),
            target_name: self.target_name.clone(),
        }
    }

    /// Seeded shuffle split; performed once per training run.
    pub fn split(&self, train_fraction: f64, seed: u64) -> Result<(Self, Self), DatasetError> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(DatasetError::BadSplit(train_fraction));
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let n_train = ((self.len() as f64) * train_fraction).round() as usize;
        let n_train = n_train.clamp(1, self.len() - 1);
        Ok((self.subset(&idx[..n_train]), self.subset(&idx[n_train..])))
    }
}

/// Per-feature and target min/max used to map raw values into [0, 1].
///
/// Shared by both decision models. Degenerate features (min = max) map to 0;
/// callers that cannot tolerate them check [`Normalization::degenerate_feature`].
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Normalization<T> {
    pub features: Vec<(T, T)>,
    pub target: (T, T),
}

impl<T: Scalar> Normalization<T> {
    pub fn from_dataset(ds: &RegressionDataset<T>) -> Self {
        let dim = ds.dim();
        let mut features = Vec::with_capacity(dim);
        for j in 0..dim {
            let mut lo = T::infinity();
            let mut hi = T::neg_infinity();
            for x in &ds.inputs {
                lo = lo.min(x[j]);
                hi = hi.max(x[j]);
            }
            features.push((lo, hi));
        }
        let mut lo = T::infinity();
        let mut hi = T::neg_infinity();
        for &y in &ds.targets {
            lo = lo.min(y);
            hi = hi.max(y);
        }
        Self { features, target: (lo, hi) }
    }

    /// Index of the first feature with zero range, if any.
    pub fn degenerate_feature(&self) -> Option<usize> {
        self.features.iter().position(|&(lo, hi)| !(lo < hi))
    }

    pub fn normalize_input(&self, raw: &[T]) -> Vec<T> {
        raw.iter()
            .zip(&self.features)
            .map(|(&v, &(lo, hi))| if hi > lo { (v - lo) / (hi - lo) } else { T::zero() })
            .collect()
    }

    pub fn normalize_target(&self, raw: T) -> T {
        let (lo, hi) = self.target;
        if hi > lo {
            (raw - lo) / (hi - lo)
        } else {
            T::zero()
        }
    }

    pub fn denormalize_target(&self, norm: T) -> T {
        let (lo, hi) = self.target;
        lo + norm * (hi - lo)
    }

    /// Scale a normalized spread back to raw target units.
    pub fn target_range(&self) -> T {
        let (lo, hi) = self.target;
        if hi > lo {
            hi - lo
        } else {
            T::one()
        }
    }

    /// True when any raw feature falls outside min/max widened by half the
    /// observed range on each side.
    pub fn out_of_domain(&self, raw: &[T]) -> bool {
        let half = T::of(0.5);
        raw.iter().zip(&self.features).any(|(&v, &(lo, hi))| {
            let pad = half * (hi - lo);
            v < lo - pad || v > hi + pad
        })
    }
}

/// Feature order used by both decision models.
pub const FEATURE_NAMES: [&str; 3] = ["target_humidity", "input_humidity", "weight"];

/// Extraction time is the canonical prediction target.
pub const TARGET_NAME: &str = "extraction_time";

/// Build the regression view (desired output humidity, detected input
/// humidity, extraction weight) -> extraction time.
pub fn from_rows(rows: &[DatasetRow]) -> Result<RegressionDataset<f64>, DatasetError> {
    let inputs = rows
        .iter()
        .map(|r| vec![r.target_humidity, r.input_humidity, r.weight])
        .collect();
    let targets = rows.iter().map(|r| r.extraction_time).collect();
    RegressionDataset::named(inputs, targets, &FEATURE_NAMES, TARGET_NAME)
}

/// Per-line parse report for partially valid files.
#[derive(Debug, Clone)]
pub struct RejectedLine {
    pub line: usize,
    pub reason: String,
}

/// Parse dataset rows from a line-oriented reader. Invalid lines are
/// reported, valid ones kept.
pub fn parse_rows(reader: impl BufRead) -> Result<(Vec<DatasetRow>, Vec<RejectedLine>), DatasetError> {
    let mut rows = Vec::new();
    let mut rejects = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<DatasetRow>(&line) {
            Ok(row) => rows.push(row),
            Err(e) => rejects.push(RejectedLine { line: i + 1, reason: e.to_string() }),
        }
    }
    Ok((rows, rejects))
}

/// Read a dataset file written by `gen-data` or `export`.
pub fn read_dataset_file(path: &std::path::Path) -> Result<(Vec<DatasetRow>, Vec<RejectedLine>), DatasetError> {
    let file = std::fs::File::open(path)?;
    parse_rows(std::io::BufReader::new(file))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{gen_historical, PlantModel};

    #[test]
    fn split_is_seeded_and_disjoint() {
        let recs = gen_historical(153, 7, &PlantModel::default());
        let rows: Vec<DatasetRow> = recs.iter().filter_map(DatasetRow::from_record).collect();
        let ds = from_rows(&rows).unwrap();
        let (tr1, te1) = ds.split(0.70, 42).unwrap();
        let (tr2, te2) = ds.split(0.70, 42).unwrap();
        assert_eq!(tr1, tr2);
        assert_eq!(te1, te2);
        assert_eq!(tr1.len() + te1.len(), 153);
        assert_eq!(tr1.len(), 107); // round(153 * 0.7)
        let (tr3, _) = ds.split(0.70, 43).unwrap();
        assert_ne!(tr1.inputs, tr3.inputs);
    }

    #[test]
    fn rejects_bad_shapes() {
        assert!(matches!(
            RegressionDataset::<f64>::new(vec![], vec![]),
            Err(DatasetError::Empty)
        ));
        assert!(matches!(
            RegressionDataset::new(vec![vec![1.0], vec![1.0, 2.0]], vec![0.0, 0.0]),
            Err(DatasetError::Ragged { row: 1, .. })
        ));
        assert!(matches!(
            RegressionDataset::new(vec![vec![f64::NAN]], vec![0.0]),
            Err(DatasetError::NonFinite(0))
        ));
    }

    #[test]
    fn parse_keeps_valid_lines_and_reports_bad_ones() {
        let recs = gen_historical(3, 1, &PlantModel::default());
        let mut text = crate::sim::to_dataset_lines(&recs);
        text.push_str("{not json\n");
        let (rows, rejects) = parse_rows(text.as_bytes()).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(rejects.len(), 1);
        assert_eq!(rejects[0].line, 4);
    }
}
