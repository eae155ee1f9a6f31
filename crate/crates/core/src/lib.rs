//! Embeddable integration runtime closing a grain-drying control loop.
//!
//! Sensor data flows over an in-process [`bus`], through [`routes`] into the
//! [`process`] engine, which consults one of two interchangeable decision
//! models ([`anfis`] or [`gpr`]) to choose dryer setpoints, gates them on
//! predicted gas consumption, and persists every cycle in the [`store`] as
//! future training data. The [`sim`] module stands in for the plant.
//!
//! Numeric code is generic over [`scalar::Scalar`] (`f32` or `f64`); the
//! aliases below pin the `f64` instantiations used by the runtime and CLI.

pub mod anfis;
pub mod bus;
pub mod cycle;
pub mod dataset;
pub mod document;
pub mod gpr;
pub mod metrics;
pub mod process;
pub mod routes;
pub mod runtime;
pub mod scalar;
pub mod sim;
pub mod store;

/// Scalar type used by the runtime and CLI.
pub type Real = f64;

pub type AnfisModel = anfis::AnfisModel<Real>;
pub type AnfisTrainingConfig = anfis::TrainingConfig<Real>;
pub type GprModel = gpr::GprModel<Real>;
pub type GprHyper = gpr::GprHyper<Real>;

pub type MetricSet = metrics::MetricSet<Real>;
pub type AdamState = metrics::AdamState<Real>;
pub type ComparisonReport = metrics::ComparisonReport<Real>;
pub type RegressionDataset = dataset::RegressionDataset<Real>;
