//! Numerical toolkit for studying how entanglement with an ancilla moves
//! through an intermediary quantum system.
//!
//! Two workflows are covered:
//!
//! - **Direct transmission** through a finite-dimensional intermediary
//!   ([`nogo`]): Dyson-series terms, kernel-projector checks and exact
//!   evolution with coupling-scaling analysis, verifying that no
//!   ancilla–receiver negativity appears at second order in the coupling.
//! - **Harvesting-assisted teleportation** ([`field`], [`harvest`],
//!   [`teleport`]): smeared Wightman functions of a massless or massive
//!   scalar vacuum, the second-order two-detector coefficients, and a
//!   Bell-measurement teleportation channel with configurable receiver-side
//!   corrections, including the closed-form teleported negativity.
//!
//! Supporting layers: dense multipartite linear algebra ([`qstate`]),
//! degenerate eigenvalue perturbation theory ([`perturb`]), adaptive
//! Gauss–Kronrod quadrature ([`quad`]) and seeded random generators for
//! property suites ([`sampling`]).
//!
//! # Conventions
//!
//! - Natural units, `hbar = c = 1`.
//! - Subsystem ordering is fixed everywhere as `Ã, A, A', B, f` with the
//!   leftmost factor owning the slowest-varying (most significant) index.
//! - Negativity is the sum of `|λ|` over negative eigenvalues of the
//!   partial transpose; a Bell pair has negativity `1/2`.
//! - Detector switching and smearing profiles are Gaussian; smearing is
//!   normalized so that its Fourier transform is `exp(-σ²k²/2)` with
//!   value 1 at `k = 0`.

pub mod error;
mod eigen;
pub mod qstate;
pub mod perturb;
pub mod quad;
mod bessel;
pub mod field;
pub mod harvest;
pub mod teleport;
pub mod nogo;
pub mod sampling;

pub use error::{Error, Result};
pub use qstate::{DensityMatrix, MultipartiteOperator, PureState};
