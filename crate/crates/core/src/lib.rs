//! Certification, witnessing and quantification of multilevel coherence
//! for finite-dimensional density matrices.
//!
//! The coherence number of a state is the smallest `k` such that it is a
//! mixture of pure states with at most `k` nonzero amplitudes in the
//! classical basis; `C_k` is the convex set of such states. The
//! robustness `R_{C_k}` measures how much noise must be mixed in before
//! a state falls into `C_k`.

pub mod criteria;
pub mod error;
pub mod experiment;
pub mod io;
pub mod linalg;
pub mod phase;
pub mod random;
pub mod robustness;
pub mod states;
pub mod witness;

pub use error::{CoherenceError, Result};
pub use linalg::{DensityMatrix, HermitianMatrix};
