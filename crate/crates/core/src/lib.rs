//! Ruin probabilities and ruin-time densities for the compound Poisson risk
//! model with a refracting threshold.

pub mod claims;
pub mod classical;
pub mod error;
pub mod fftconv;
pub mod hybridfn;
pub mod lundberg;
pub mod model;
pub mod quad;
pub mod refracted;
pub mod simulator;
pub mod validate;

pub use claims::{ClaimDistribution, TabulatedDensity};
pub use error::{Error, Result};
pub use hybridfn::HybridFunction;
pub use model::{RiskModel, TransformParams};
