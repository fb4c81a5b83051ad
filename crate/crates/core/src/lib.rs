//! Fixed-T panel estimation with common correlated effects.
//!
//! The crate estimates slope coefficients in balanced panels where the error
//! carries an unobserved factor structure. Unobserved factors are proxied by
//! cross-sectional moments of the observables (means of the regressors and
//! outcome, per-period second moments) together with known deterministic
//! columns (intercept, trends), and the proxies are partialled out of every
//! unit's data before pooled least squares. Inference accounts for the
//! first-stage sampling error in the estimated proxies through an influence
//! function correction to the sandwich variance.
//!
//! Modules:
//! - [`matops`] — dense matrix primitives (least squares, annihilators,
//!   Kronecker products, vec, commutation matrix)
//! - [`panel`] — balanced panel data model and CSV ingestion
//! - [`proxy`] — factor-proxy construction and per-unit influence vectors
//! - [`estimator`] — the pooled estimator, presets, and spec comparison
//! - [`variance`] — corrected and naive sandwich variance, confidence intervals
//! - [`dgp`] — synthetic factor-model panels with known truth
//! - [`montecarlo`] — replication engine for bias/coverage/efficiency studies

pub mod dgp;
pub mod error;
pub mod estimator;
pub mod matops;
pub mod montecarlo;
pub mod panel;
pub mod proxy;
pub mod variance;

pub use error::{Error, ErrorKind, Result};
pub use matops::Matrix;
