//! Weighted least squares and the fit pipelines for the measured data sets.

pub mod lm;
pub mod pipelines;
pub mod synth;

pub use lm::{least_squares, numerical_jacobian, FitData, FitProblem, FitReport, FitResult, LmOptions, Parameter};
pub use pipelines::*;
pub use synth::{synthesize, SyntheticDataset};
