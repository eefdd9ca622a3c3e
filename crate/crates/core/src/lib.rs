//! Path analysis and single-mediator mediation analysis.
//!
//! Model syntax parsing, CSV loading, OLS, mediation effect decomposition
//! with Sobel, bootstrap and product-distribution intervals, maximum
//! likelihood path-model fitting with fit indices, a Monte Carlo study
//! engine and a command-line front end.

pub mod cli;
pub mod data_io;
pub mod inference;
pub mod mediation;
pub mod model_dsl;
pub mod montecarlo;
pub mod ols;
pub mod path_fit;
pub mod report;
pub mod rng;
pub mod special;
