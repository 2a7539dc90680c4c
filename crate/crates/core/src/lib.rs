//! Validity toolkit for model-generated scores treated as noisy measurements
//! of latent variables: ingest, aggregation, inter-rater reliability, PCA,
//! prompt sensitivity, errors-in-variables regression and simulation.
//!
//! Numeric routines are generic over [`Scalar`] (`f64` or `f32`); the
//! aliases below fix the default `f64` instantiation.

pub mod aggregate;
pub mod dimensionality;
pub mod econometrics;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod panel;
pub mod pipeline;
pub mod reliability;
pub mod report;
pub mod scalar;
pub mod sensitivity;
pub mod simulate;
pub mod stats;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Matrix64 = linalg::Matrix<f64>;
pub type Matrix32 = linalg::Matrix<f32>;
pub type Dataset64 = econometrics::Dataset<f64>;
pub type Dataset32 = econometrics::Dataset<f32>;
pub type RegressionResult64 = econometrics::RegressionResult<f64>;
pub type RegressionResult32 = econometrics::RegressionResult<f32>;
pub type AttenuationEstimate64 = econometrics::AttenuationEstimate<f64>;
pub type PcaResult64 = dimensionality::PcaResult<f64>;
pub type PcaResult32 = dimensionality::PcaResult<f32>;
pub type CorrelationMatrix64 = dimensionality::CorrelationMatrix<f64>;
pub type ReliabilityReport64 = reliability::ReliabilityReport<f64>;
pub type AlphaEstimate64 = reliability::AlphaEstimate<f64>;
pub type VarianceDecomposition64 = sensitivity::VarianceDecomposition<f64>;
