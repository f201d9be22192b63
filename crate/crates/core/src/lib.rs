//! Minimum-cardinality constant-modulus beamformer design.
//!
//! Given a channel matrix `H`, a desired receive vector `s` and an error
//! bound, find a transmit vector `x` whose nonzero entries all have unit
//! modulus, with `‖s − Hᵀx‖₂` within the bound and as few nonzero entries as
//! possible.
//!
//! * [`bnb`] solves the problem exactly with a branch-and-cut over an LP
//!   outer approximation ([`relaxation`]) and a dedicated handler for the
//!   nonconvex modulus constraints ([`modulus`]).
//! * [`heuristic`] is a greedy random-restart swap search that yields good
//!   feasible solutions quickly and warm-starts the exact solver.
//! * [`oracle`] is a brute-force reference for small instances.
//! * [`bench`] runs ensembles and aggregates statistics.

pub mod bench;
pub mod bnb;
pub mod error;
pub mod heuristic;
pub mod lp;
pub mod model;
pub mod modulus;
pub mod oracle;
pub mod relaxation;

pub use error::{Error, Result};
pub use model::{
    generate_instance, is_feasible, read_instance, write_instance, CandidateSolution, ComplexSolution, PresetMapping,
    ProblemInstance, RealInstance, TolPreset,
};
