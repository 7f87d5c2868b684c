//! Trust-region subproblem laboratory: reference solutions, case taxonomy,
//! optimal-set geometry, projected-gradient traces and empirical estimates of
//! error-bound moduli, KL exponents and convergence rates.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the scalar to `f64`.

pub mod analysis;
pub mod generators;
pub mod geometry;
pub mod io;
pub mod linalg;
pub mod model;
pub mod pgm;
pub mod scalar;
pub mod solver;

pub use scalar::Scalar;

pub type SymMatrix = linalg::SymMatrix<f64>;
pub type SpectralData = linalg::SpectralData<f64>;
pub type TrsInstance = model::TrsInstance<f64>;
pub type KktReport = model::KktReport<f64>;
pub type Tolerances = model::Tolerances<f64>;
pub type GroundTruth = solver::GroundTruth<f64>;
pub type SolutionSet = solver::SolutionSet<f64>;
pub type PlantedInstance = generators::PlantedInstance<f64>;
pub type BoundaryFrame = geometry::BoundaryFrame<f64>;
pub type PgmConfig = pgm::PgmConfig<f64>;
pub type IterateTrace = pgm::IterateTrace<f64>;
pub type SampleCloud = analysis::SampleCloud<f64>;
