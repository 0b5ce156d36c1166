//! Multiplicative Error Models for non-negative time series.
//!
//! A series is decomposed as `x_t = mu * tau_t * xi_t * eps_t`: a constant
//! level, a kernel-smoothed low-frequency component, a GARCH-type short-run
//! component and a unit-mean error. The short-run parameters are estimated
//! by efficient GMM (equivalently, Gamma quasi-likelihood), alternating with
//! the smoother when a low-frequency component is present. Vector versions
//! share one low-frequency component across series and allow full
//! spillovers through `alpha1`.

pub mod data;
pub mod diagnostics;
pub mod dist;
pub mod error;
pub mod ingest;
pub mod linalg;
pub mod mem;
pub mod optim;
pub mod sim;
pub mod smoother;
pub mod spfit;
pub mod special;
pub mod vmem;

pub use data::{AlignedPanel, Date, FitResult, ModelKind, ObservationSeries, Params, UniParams, VecParams};
pub use error::{Error, Result};
