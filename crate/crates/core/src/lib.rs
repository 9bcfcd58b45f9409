//! Littlewood-Paley and Besov-space toolkit for one-dimensional hyperbolic
//! balance laws with partial dissipation: spectral grids, dyadic blocks,
//! Besov norms and inequality checks, structure certification, exponential
//! integrators and decay experiments.

pub mod besov;
pub mod decay;
pub mod error;
pub mod linalg;
pub mod littlewood_paley;
pub mod sampling;
pub mod solver;
pub mod spectral;
pub mod stats;
pub mod systems;

pub use besov::{besov_norm, chemin_lerner_norm, BesovNorm, BesovParams, Exponent, InequalityReport, VerifierSetup};
pub use decay::{
    fit_rate, run_experiment, synthesize_initial_data, torus_validity_horizon, DataKind, DecayExperiment,
    DecayReport, Direction, ExperimentConfig, InitialDataSpec, NormKind, TrackedNorm,
};
pub use error::{Error, Result};
pub use littlewood_paley::{BlockIndexRange, BlockTables, DyadicCutoffs};
pub use solver::{evolve_linear, evolve_nonlinear, LemmaId, LemmaParams, SnapshotSchedule, Trajectory};
pub use spectral::{forward_transform, inverse_transform, GridSpec, RealField, SpectralField};
pub use systems::{builtin, check_structure, resolve_model, StructureReport, SystemSpec, BUILTIN_MODELS};
