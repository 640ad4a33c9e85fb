//! Numerical laboratory for smallest singular values of shifted inhomogeneous
//! random matrices `V ⊙ W − z·Id`.
//!
//! The crate is organized around the objects the experiments manipulate:
//!
//! * [`profile`] — variance profiles `V`, their derived statistics
//!   (`σ*`, `σ`, sparsity ratio), thresholding, and generators for the
//!   standard profile families (band, masked, block-shift, ...).
//! * [`sampler`] — reproducible sampling of realizations `A = V ⊙ W` and
//!   shifted matrices `A − z·Id`, with counter-based per-trial substreams.
//! * [`linalg`] — dense spectral primitives: singular spectra, eigenvalues,
//!   the `∞→2` norm, and bilinear-annihilating normal vectors.
//! * [`graph`] — the deterministic directed graph on principal-submatrix
//!   index sets, its dyadic threshold ladder, path/data-structure
//!   enumeration, and the single-step deconstruction witness check.
//! * [`certify`] — computable lower-bound certificates: block Gershgorin,
//!   its shifted corollary, the iterative block decomposition, and
//!   terminal-invertibility certification.
//! * [`verify`] — Monte-Carlo harness for the probabilistic claims, with
//!   violation counts and fitted constants.
//! * [`spectral`] — empirical spectral distribution experiments: band-matrix
//!   ESD against the uniform disc and squared-singular-value measure
//!   comparisons against the i.i.d. Gaussian ensemble.

pub mod certify;
pub mod graph;
pub mod linalg;
pub mod profile;
pub mod sampler;
pub mod spectral;
pub mod verify;

pub use num_complex::Complex64;

/// Version string embedded in every serialized report.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
