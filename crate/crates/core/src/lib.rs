//! Geometric matrix completion by deep spectral factorisation.
//!
//! The product matrix is parametrised as `X = Φ P C Qᵀ Ψᵀ`, where `Φ`, `Ψ`
//! are Laplacian eigenbases of a row graph and a column graph, and the
//! factors are trained by plain gradient descent from a scaled identity.

pub mod dataio;
pub mod error;
pub mod experiment;
pub mod graphs;
pub mod linalg;
pub mod metrics;
pub mod objectives;
pub mod seeding;
pub mod spectral;
pub mod synthdata;
pub mod trainer;

pub use error::{Error, Result};
pub use graphs::{LaplacianSpectrum, WeightedGraph};
pub use objectives::{LossWeights, MaskedMatrix};
pub use spectral::{Basis, FactorModel, SpectralFilterBank, Trainable, Variant};
pub use trainer::{train, TrainConfig, TrainOutcome};
