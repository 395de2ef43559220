//! Forward variable selection for sparse, high-dimensional varying
//! coefficient models
//!
//! ```text
//! Y = sum_j beta_j(T) X_j + eps
//! ```
//!
//! Each coefficient function is approximated by a B-spline expansion of
//! dimension `L`, covariates are added greedily by residual variance and
//! the path is cut with the EBIC (or BIC).

pub mod cli;
pub mod data;
pub mod error;
pub mod linalg;
pub mod regression;
pub mod report;
pub mod selector;
pub mod sim;
pub mod spline;

pub use data::{load_csv, Dataset};
pub use error::{Error, Result};
pub use regression::{fit_subset, rss_reduction, FitResult, ProjectionCache};
pub use selector::{run_forward, EbicConfig, SelectionTrace};
pub use spline::SplineBasis;
