//! Subsampled inference for the low-dimensional block of a high-dimensional GLM.
//!
//! The coefficient vector splits as `β = (θ, γ)` with `θ` the first `d`
//! coordinates. A pilot subsample fits a penalized `β̂ₚ` and a decorrelation
//! matrix `Ŵₚ`; three procedures then build intervals for `θ`:
//!
//! * [`dvs`]: solve the decorrelated score on a second subsample, correct it
//!   with one full-data score step, and calibrate by Monte Carlo;
//! * [`multistep`]: iterate full-data score corrections with the pilot
//!   Jacobian held fixed, with normal intervals;
//! * [`simultaneous`]: debias with a CLIME inverse of the pilot Hessian and
//!   calibrate the max statistic by multiplier bootstrap.
//!
//! All randomness is index-addressed ([`rng`]), so results do not depend on
//! the number of worker threads.

pub mod ci;
pub mod dvs;
pub mod error;
pub mod experiment;
pub mod glm;
pub mod io;
pub mod lasso;
pub mod linalg;
pub mod multistep;
pub mod pipeline;
pub mod rng;
pub mod score;
pub mod simgen;
pub mod simplex;
pub mod simultaneous;
pub mod stats;
pub mod subsample;

pub use ci::{CiMethod, CiSet};
pub use dvs::{AsymptoticModel, DvsEstimate};
pub use error::{Error, Result};
pub use experiment::{ExperimentConfig, Method, MetricsRow};
pub use glm::{Dataset, FamilyKind, GlmFamily, ParamSplit};
pub use lasso::{LassoOptions, PenaltyConfig, PilotFit};
pub use multistep::{MultistepOptions, MultistepTrace};
pub use rng::{SeedSpec, StreamRng};
pub use score::{DecorrelatedDesign, ScoreContext};
pub use simgen::SimConfig;
pub use simultaneous::{BootstrapQuantiles, ClimeSolution};
pub use subsample::SubsampleIndex;
