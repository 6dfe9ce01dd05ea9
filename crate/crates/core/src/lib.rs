//! Gaussian stochastic process emulation with robust estimation of the
//! correlation parameters.
//!
//! A model is fitted by maximizing the marginal posterior of the inverse range
//! parameters `beta` (and the nugget-variance ratio `eta`) after integrating out
//! the trend coefficients and the variance. Predictions are Student-t.
//!
//! ```
//! use gasp::{fit, predict, FitOptions, KernelSpec, Trend};
//! use nalgebra::{DMatrix, DVector};
//!
//! let x = DMatrix::from_fn(10, 1, |i, _| i as f64 / 9.0);
//! let y = DVector::from_fn(10, |i, _| (6.0 * x[(i, 0)]).sin());
//! let model = fit(&x, &y, &Trend::Constant, &KernelSpec::matern52(1), &FitOptions::default()).unwrap();
//! let pred = predict(&model, &DMatrix::from_element(1, 1, 0.55), None).unwrap();
//! assert!((pred.mean[0] - (6.0f64 * 0.55).sin()).abs() < 0.05);
//! ```

// `!(x > 0.0)` style checks are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod cli;
pub mod error;
pub mod fitting;
pub mod inert;
pub mod io;
pub mod kernels;
pub mod marginal;
pub mod optim;
pub mod ppgasp;
pub mod prediction;
pub mod priors;
pub mod testbed;
pub mod trend;

pub use error::{GaspError, Result};
pub use fitting::{fit, fit_flat_mode, FitDiagnostics, FitOptions, GaSPModel};
pub use inert::{find_inert_inputs, InertReport};
pub use io::{load_model, load_ppmodel, save_model, save_ppmodel, ModelFile};
pub use kernels::{InverseRange, KernelFamily, KernelSpec};
pub use marginal::NuggetMode;
pub use ppgasp::{fit_ppgasp, predict_ppgasp, PPGaSPModel, PPPrediction};
pub use prediction::{leave_one_out, metrics, predict, predict_with, simulate, LooSummary, Metrics, PredictiveSummary, SdKind};
pub use priors::{PriorChoice, ScaleRule};
pub use trend::Trend;
